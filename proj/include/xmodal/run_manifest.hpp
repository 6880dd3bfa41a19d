#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

namespace xmodal {

/// Git blob hash ("blob <size>\0" + content, SHA-1) of a file's bytes.
std::string git_blob_hash(const std::string& content);
/// Hash of a file, or of a directory as the hash of its sorted (relative path, blob hash) list.
std::string content_hash(const std::filesystem::path& path);

/// Writes <out_dir>/run.json echoing the subcommand, resolved parameters, seed, and the
/// content hash of every input path.
void write_run_manifest(const std::filesystem::path& out_dir, const std::string& command, const nlohmann::json& params,
                        const std::vector<std::filesystem::path>& inputs);

}  // namespace xmodal
