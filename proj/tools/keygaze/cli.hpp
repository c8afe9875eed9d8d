// SPDX-License-Identifier: Apache-2.0
/**
 * @file   cli.hpp
 * @brief  Entry point of the keygaze command-line tool.
 */
#pragma once

namespace keygaze::cli {

/// Exit codes by failure class.
enum ExitCode : int {
  kOk = 0,
  kValidation = 2,
  kRuntime = 3,
  kIo = 4,
};

/// Parses argv and runs one subcommand. Never throws.
int run(int argc, char** argv);

}  // namespace keygaze::cli
