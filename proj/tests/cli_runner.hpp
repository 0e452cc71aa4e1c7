#pragma once

#include <compose/cli.hpp>

#include <sstream>
#include <string>
#include <vector>

namespace testing_support {

struct CliResult {
    int code = 0;
    std::string out;
    std::string err;
};

inline CliResult run(std::vector<std::string> args) {
    args.insert(args.begin(), "compose-kit");
    std::vector<char*> argv;
    for (auto& a : args) argv.push_back(a.data());
    std::ostringstream out, err;
    CliResult r;
    r.code = compose::run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
    r.out = out.str();
    r.err = err.str();
    return r;
}

/// 64-bit FNV-1a.
inline std::uint64_t fnv1a(const std::string& bytes) {
    std::uint64_t h = 0xcbf29ce484222325ull;
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 0x100000001b3ull;
    }
    return h;
}

}  // namespace testing_support
