#pragma once

#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>

namespace tgr::testing {

inline std::string data_path(const std::string& relative) {
  return std::string(TGR_TEST_DATA_DIR) + "/" + relative;
}

inline std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("missing test file " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

}  // namespace tgr::testing
