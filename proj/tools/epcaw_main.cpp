// SPDX-License-Identifier: Apache-2.0
#include "epcaw/cli.hpp"

int main(int argc, char** argv) { return epcaw::cli_run(argc, argv); }
