// SPDX-License-Identifier: Apache-2.0
#include <iostream>

#include "isq/pipeline.hpp"

int main(int argc, char** argv) { return isq::run_cli(argc, argv, std::cout, std::cerr); }
