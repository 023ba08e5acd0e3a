// Copyright 2026 The CTNet Authors.
// SPDX-License-Identifier: Apache-2.0

#include "cli.hpp"

int main(int argc, char** argv) { return ctnet::cli::run(argc, argv); }
