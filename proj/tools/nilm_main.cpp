// SPDX-License-Identifier: Apache-2.0
#include "nilm/cli.hpp"

int main(int argc, char **argv) { return nilm::cli::run(argc, argv); }
