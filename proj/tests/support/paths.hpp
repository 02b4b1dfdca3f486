#pragma once

#include <cstdlib>
#include <filesystem>

#ifndef ASDML_TEST_DATA_DIR
#define ASDML_TEST_DATA_DIR "data"
#endif

namespace asdml::fixtures {

/// Directory holding the UCI ARFF files: $ASDML_DATA_DIR, else <repo>/data.
inline std::filesystem::path uci_data_dir() {
    if (const char* env = std::getenv("ASDML_DATA_DIR"); env && *env) return env;
    return ASDML_TEST_DATA_DIR;
}

inline std::filesystem::path scratch_dir(const std::string& name) {
    auto dir = std::filesystem::temp_directory_path() / ("asdml_test_" + name);
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    return dir;
}

}  // namespace asdml::fixtures
