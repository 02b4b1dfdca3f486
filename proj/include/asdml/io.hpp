#pragma once

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "asdml/dataset.hpp"

namespace asdml {

inline std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot open '" + path.string() + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

inline void write_file(const std::filesystem::path& path, std::string_view content) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write '" + path.string() + "'");
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
}

/// File names of the two UCI screening datasets inside the data directory.
inline constexpr const char* kChildrenFile = "Autism-Child-Data.arff";
inline constexpr const char* kAdultFile = "Autism-Adult-Data.arff";

/// $ASDML_DATA_DIR if set, otherwise ./data.
inline std::filesystem::path data_dir() {
    if (const char* env = std::getenv("ASDML_DATA_DIR"); env && *env) return env;
    return "data";
}

inline DataTable load_table(const std::filesystem::path& path) {
    const std::string text = read_file(path);
    if (text.find_first_not_of(" \t\r\n") == std::string::npos)
        throw ParseError("'" + path.string() + "' is empty");
    const auto ext = detail::lower(path.extension().string());
    if (ext == ".csv")
        throw InvalidArgument("CSV input needs a schema; convert to ARFF or use parse_csv");
    return parse_arff(text);
}

/// Loads "children", "adult", "combined" (children + adult) from `dir`, or any
/// other value as an ARFF path.
inline DataTable load_dataset(const std::string& id,
                              const std::filesystem::path& dir = data_dir()) {
    if (id == "children") return load_table(dir / kChildrenFile);
    if (id == "adult") return load_table(dir / kAdultFile);
    if (id == "combined")
        return combine(load_table(dir / kChildrenFile), load_table(dir / kAdultFile));
    return load_table(id);
}

inline bool dataset_available(const std::string& id,
                              const std::filesystem::path& dir = data_dir()) {
    namespace fs = std::filesystem;
    if (id == "children") return fs::exists(dir / kChildrenFile);
    if (id == "adult") return fs::exists(dir / kAdultFile);
    if (id == "combined") return fs::exists(dir / kChildrenFile) && fs::exists(dir / kAdultFile);
    return fs::exists(id);
}

}  // namespace asdml
