#pragma once

#include <functional>
#include <memory>
#include <ostream>
#include <string>
#include <string_view>
#include <vector>

#include "gseo/llm_gateway.hpp"

namespace gseo::cli {

inline constexpr std::string_view kArtifactVersion = "0.1.0";

// Runs one command line (without the program name). Returns the process
// exit code: 0 success, 1 usage or input error, 2 runtime failure. Errors
// are written to `err` as a single "error: <code>: <message>" line.
int dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

// Builds the backend for a --backend value; the default is make_backend.
using BackendFactory = std::function<std::unique_ptr<Backend>(const std::string& spec)>;

int dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err,
             const BackendFactory& factory);

// 1 for codes caused by the invocation or its inputs, 2 otherwise.
int exit_code_for(const std::string& error_code);

}  // namespace gseo::cli
