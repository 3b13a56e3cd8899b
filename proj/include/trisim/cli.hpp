#pragma once

#include <string>
#include <vector>

namespace trisim {

// Exit codes: 0 success, 1 usage/config error, 2 data/format error,
// 3 numeric failure (divergence, failed gradient check).
int run_cli(const std::vector<std::string>& args);

}  // namespace trisim
