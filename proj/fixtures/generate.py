#!/usr/bin/env python3
# SPDX-License-Identifier: Apache-2.0
"""Regenerates divergence.json, toy.jsonl and tools.json.

The script file drives the scripted backend for the five toy tasks. Keys are
"role|purpose|perspective|round" with "*" as a reusable round wildcard; values
are response texts or {"when_prompt_contains", "text"} rules matched against
the prompt (first match wins, exact-round entries are consumed in order).
"""

import json
from pathlib import Path

HERE = Path(__file__).parent

AGENTS = ["Planner", "Executor", "Diagnoser"]


def block(goal, tool, args):
    return f"GOAL: {goal}\nTOOL: {tool}\nARGS: {args}\n"


def scores(values):
    return "".join(f"Plan {i + 1}: {v}\n" for i, v in enumerate(values))


def eval_key(evaluator, target, rnd="*"):
    return f"{evaluator}|Evaluation|{evaluator}->{target}|{rnd}"


def nine_evaluations(entries, self_scores, cross_scores, rnd="*"):
    """self_scores/cross_scores: dicts keyed by agent / (evaluator, target)."""
    for i in AGENTS:
        for j in AGENTS:
            vec = self_scores[i] if i == j else cross_scores[(i, j)]
            entries.setdefault(eval_key(i, j, rnd), []).append(scores(vec))


def uniform_nine(entries, self_vec, cross_vec, rnd="*"):
    nine_evaluations(
        entries,
        {a: self_vec for a in AGENTS},
        {(i, j): cross_vec for i in AGENTS for j in AGENTS if i != j},
        rnd,
    )


def cond(needle, text):
    return {"when_prompt_contains": needle, "text": text}


# ---------------------------------------------------------------------------
# Task 1: seeded miscalibration. The first candidate answers from recall and
# hallucinates; the second checks Wikipedia. Cross-agent consistency favors
# the checked plan, so epc-aw recovers while no-repair executes the first
# block and never gathers evidence.
# ---------------------------------------------------------------------------

def task_capital_france():
    entries = {}
    entries["Planner|CandidateGeneration|-|*"] = [
        block("Answer from recall without checking sources", "base_generator",
              "state the capital from memory")
        + "\n"
        + block("Look up the capital of France", "wikipedia_search", "France")
    ]
    uniform_nine(entries, self_vec=[2, 4], cross_vec=[3, 3])
    entries["Executor|ToolArgumentation|-|*"] = [
        cond("wikipedia_search", "France"),
        "The capital of France is Rome, as best I recall.",
    ]
    entries["Diagnoser|Diagnosis|-|*"] = [
        cond("Paris", "SUPPORTED\nThe page names the capital directly.\n"
                      "EVIDENCE: The capital of France is Paris."),
        "UNSUPPORTED: the outcome offers no verifiable source.",
    ]
    entries["Diagnoser|StopCheck|-|*"] = [
        cond("The capital of France is Paris", "SUFFICIENT"),
        "INSUFFICIENT",
    ]
    entries["Planner|AnswerGeneration|-|*"] = [
        cond("The capital of France is Paris", "Paris"),
        "Rome",
    ]
    entries["Diagnoser|ConstraintInduction|-|*"] = [
        "Treat unverified recall as a hypothesis, not evidence; route claims through a"
        " checkable source before committing."
    ]
    return entries


# ---------------------------------------------------------------------------
# Task 2: the CESR fixture. Two candidates; the planner always prefers the
# first. At rounds 2 and 4 the cross-agent scores favor the second, seeding
# exactly two divergences. Evidence lands at round 5.
# ---------------------------------------------------------------------------

def task_divergent_rounds():
    entries = {}
    entries["Planner|CandidateGeneration|-|*"] = [
        block("Check the Olympics host city page", "wikipedia_search", "1900 Summer Olympics")
        + "\n"
        + block("Search the web for the host city river", "google_search",
                "1900 olympics host city river")
    ]
    # default: planner favors plan 1, everyone else neutral -> IPS picks 1
    nine_evaluations(
        entries,
        {"Planner": [4, 3], "Executor": [3, 3], "Diagnoser": [3, 3]},
        {(i, j): [3, 3] for i in AGENTS for j in AGENTS if i != j},
    )
    # rounds 2 and 4: peers favor plan 2 while the planner sticks with 1
    for rnd in (2, 4):
        nine_evaluations(
            entries,
            {"Planner": [4, 3], "Executor": [3, 4], "Diagnoser": [3, 4]},
            {
                ("Planner", "Executor"): [4, 4],
                ("Planner", "Diagnoser"): [4, 4],
                ("Executor", "Planner"): [3, 3],
                ("Executor", "Diagnoser"): [3, 3],
                ("Diagnoser", "Planner"): [3, 3],
                ("Diagnoser", "Executor"): [3, 3],
            },
            rnd,
        )
    entries["Executor|ToolArgumentation|-|*"] = [
        cond("wikipedia_search", "1900 Summer Olympics"),
        cond("google_search", "1900 olympics host city river"),
        "Seine",
    ]
    for rnd in range(1, 5):
        entries[f"Diagnoser|Diagnosis|-|{rnd}"] = [
            "UNSUPPORTED: the retrieved material does not yet isolate the river."
        ]
    entries["Diagnoser|Diagnosis|-|5"] = [
        "SUPPORTED\nConsistent across sources.\n"
        "EVIDENCE: The Seine flows through Paris, host city of the 1900 Summer Olympics."
    ]
    entries["Diagnoser|Diagnosis|-|*"] = [
        "UNSUPPORTED: the retrieved material does not yet isolate the river."
    ]
    entries["Diagnoser|ConstraintInduction|-|*"] = [
        "Prefer retrieval routes that peers under different information also rate viable;"
        " do not keep re-running a route only the planner favors."
    ]
    entries["Diagnoser|StopCheck|-|*"] = [
        cond("The Seine flows through", "SUFFICIENT"),
        "INSUFFICIENT",
    ]
    entries["Planner|AnswerGeneration|-|*"] = [
        cond("The Seine flows through", "Seine"),
        "The Tiber, possibly.",
    ]
    return entries


# ---------------------------------------------------------------------------
# Task 3: never sufficient; exercises the forced answer at the round budget.
# ---------------------------------------------------------------------------

def task_never_enough():
    entries = {}
    entries["Planner|CandidateGeneration|-|*"] = [
        block("Reconstruct the first message wording", "base_generator",
              "reason over what is known")
    ]
    uniform_nine(entries, self_vec=[3], cross_vec=[3])
    entries["Executor|ToolArgumentation|-|*"] = [
        "The records I can recall do not pin down the wording."
    ]
    entries["Diagnoser|Diagnosis|-|*"] = [
        "UNSUPPORTED: no verifiable wording was produced."
    ]
    entries["Diagnoser|StopCheck|-|*"] = ["INSUFFICIENT"]
    entries["Planner|AnswerGeneration|-|*"] = [
        "The wording could not be established from the gathered evidence."
    ]
    return entries


# ---------------------------------------------------------------------------
# Task 4: solved in one round by every mode.
# ---------------------------------------------------------------------------

def task_first_try():
    entries = {}
    entries["Planner|CandidateGeneration|-|*"] = [
        block("State the number of sides of a hexagon", "base_generator", "basic geometry")
    ]
    uniform_nine(entries, self_vec=[4], cross_vec=[4])
    entries["Executor|ToolArgumentation|-|*"] = ["A hexagon has 6 sides."]
    entries["Diagnoser|Diagnosis|-|*"] = [
        "SUPPORTED\nElementary geometry.\nEVIDENCE: A hexagon has 6 sides."
    ]
    entries["Diagnoser|StopCheck|-|*"] = [
        cond("A hexagon has 6 sides", "SUFFICIENT"),
        "INSUFFICIENT",
    ]
    entries["Planner|AnswerGeneration|-|*"] = [
        cond("A hexagon has 6 sides", "6"),
        "unknown",
    ]
    return entries


# ---------------------------------------------------------------------------
# Task 5: built to split MSA from IPS. Self scores favor plan 1 (so the mean
# does too) while consistency favors plan 2.
# ---------------------------------------------------------------------------

def task_split_selection():
    entries = {}
    entries["Planner|CandidateGeneration|-|*"] = [
        block("Name the source novel from memory", "base_generator", "recall the author")
        + "\n"
        + block("Check the novel's Wikipedia page", "wikipedia_search",
                "Do Androids Dream of Electric Sheep?")
    ]
    uniform_nine(entries, self_vec=[5, 3], cross_vec=[5, 2])
    entries["Executor|ToolArgumentation|-|*"] = [
        cond("wikipedia_search", "Do Androids Dream of Electric Sheep?"),
        "It reads like an Arthur C. Clarke premise, from memory.",
    ]
    entries["Diagnoser|Diagnosis|-|*"] = [
        cond("Philip K. Dick", "SUPPORTED\nThe page names the author.\n"
                               "EVIDENCE: Blade Runner is based on the novel by Philip K. Dick."),
        "UNSUPPORTED: recall alone is not a verifiable source.",
    ]
    entries["Diagnoser|StopCheck|-|*"] = [
        cond("Philip K. Dick", "SUFFICIENT"),
        "INSUFFICIENT",
    ]
    entries["Planner|AnswerGeneration|-|*"] = [
        cond("Philip K. Dick", "Philip K. Dick"),
        "Arthur C. Clarke",
    ]
    entries["Diagnoser|ConstraintInduction|-|*"] = [
        "Do not let a familiar-sounding recollection outweigh a checkable source; verify"
        " authorship against the primary page before answering."
    ]
    return entries


def main():
    script = {
        "version": 1,
        "tasks": {
            "capital-france": task_capital_france(),
            "divergent-rounds": task_divergent_rounds(),
            "never-enough": task_never_enough(),
            "first-try": task_first_try(),
            "split-selection": task_split_selection(),
        },
    }
    (HERE / "divergence.json").write_text(json.dumps(script, indent=2, sort_keys=True) + "\n")

    tasks = [
        {"id": "capital-france", "question": "What is the capital of France?",
         "answer": "Paris"},
        {"id": "divergent-rounds",
         "question": "Which river flows through the city that hosted the 1900 Summer Olympics?",
         "answer": "Seine"},
        {"id": "never-enough",
         "question": "What was the exact wording of the first message sent over the ARPANET?",
         "answer": "lo"},
        {"id": "first-try", "question": "How many sides does a hexagon have?", "answer": "6"},
        {"id": "split-selection",
         "question": "Who wrote the novel on which the film Blade Runner is based?",
         "answer": "Philip K. Dick"},
    ]
    with open(HERE / "toy.jsonl", "w") as f:
        for t in tasks:
            f.write(json.dumps(t) + "\n")

    tools = {
        "version": 1,
        "google_search": {
            "1900 olympics host city river": [
                {"url": "https://en.wikipedia.org/wiki/1900_Summer_Olympics",
                 "snippet": "The 1900 Games were held in Paris, France."},
                {"url": "https://huggingface.co/datasets/qa-dump",
                 "snippet": "benchmark answer dump"},
                {"url": "https://www.britannica.com/place/Seine-River",
                 "snippet": "The Seine drains the Paris basin."},
            ]
        },
        "wikipedia_search": {
            "France": "France is a country in Western Europe. Its capital and largest city"
                      " is Paris.",
            "1900 Summer Olympics": "The 1900 Summer Olympics were an international multi-sport"
                                    " event held in Paris, France.",
            "Do Androids Dream of Electric Sheep?":
                "Do Androids Dream of Electric Sheep? is a 1968 science fiction novel by the"
                " American writer Philip K. Dick, the literary source of the film Blade Runner.",
        },
        "pages": {
            "https://www.britannica.com/place/Seine-River":
                "The Seine is a river in northern France that flows through Paris."
        },
    }
    (HERE / "tools.json").write_text(json.dumps(tools, indent=2, sort_keys=True) + "\n")
    print("wrote divergence.json, toy.jsonl, tools.json")


if __name__ == "__main__":
    main()
