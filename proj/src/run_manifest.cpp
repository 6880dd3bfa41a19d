#include "xmodal/run_manifest.hpp"

#include <algorithm>
#include <fstream>
#include <iterator>

#include <openssl/evp.h>

#include "xmodal/error.hpp"

namespace xmodal {

std::string git_blob_hash(const std::string& content) {
  const std::string header = "blob " + std::to_string(content.size()) + '\0';
  const std::string blob = header + content;
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int length = 0;
  if (EVP_Digest(blob.data(), blob.size(), digest, &length, EVP_sha1(), nullptr) != 1)
    throw Error(ErrorCode::kIo, "sha1 digest failed");
  static constexpr char kHex[] = "0123456789abcdef";
  std::string out;
  for (unsigned int i = 0; i < length; ++i) {
    const unsigned char b = digest[i];
    out += kHex[b >> 4];
    out += kHex[b & 0xF];
  }
  return out;
}

namespace {

std::string slurp(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kIo, "cannot read " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

}  // namespace

std::string content_hash(const std::filesystem::path& path) {
  if (!std::filesystem::is_directory(path)) return git_blob_hash(slurp(path));
  std::vector<std::filesystem::path> files;
  for (const auto& entry : std::filesystem::recursive_directory_iterator(path))
    if (entry.is_regular_file()) files.push_back(entry.path());
  std::sort(files.begin(), files.end());
  std::string listing;
  for (const auto& f : files)
    listing += std::filesystem::relative(f, path).generic_string() + ' ' + git_blob_hash(slurp(f)) + '\n';
  return git_blob_hash(listing);
}

void write_run_manifest(const std::filesystem::path& out_dir, const std::string& command, const nlohmann::json& params,
                        const std::vector<std::filesystem::path>& inputs) {
  nlohmann::json manifest;
  manifest["command"] = command;
  manifest["params"] = params;
  nlohmann::json hashes = nlohmann::json::object();
  for (const auto& in : inputs) hashes[in.generic_string()] = content_hash(in);
  manifest["inputs"] = hashes;
  std::filesystem::create_directories(out_dir);
  std::ofstream out(out_dir / "run.json");
  if (!out) throw Error(ErrorCode::kIo, "cannot write " + (out_dir / "run.json").string());
  out << manifest.dump(2) << '\n';
}

}  // namespace xmodal
