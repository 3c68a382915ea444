// SPDX-License-Identifier: Apache-2.0
#include "rsed_cli.hpp"

int main(int argc, char** argv) { return rsed::cli::run(argc, argv); }
