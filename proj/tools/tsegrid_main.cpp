// Copyright 2026 tsegrid authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include "tsegrid/cli.hpp"

int main(int argc, char** argv) { return tsegrid::cli::run(argc, argv); }
