#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "bitforge/run_dir.hpp"

namespace bitforge {
namespace {

std::string hex64(std::uint64_t v) {
  char buf[20];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

}  // namespace

RunDir::RunDir(const std::filesystem::path& out, const TrainConfig& cfg)
    : path_(out / name_for(cfg)), cfg_(cfg) {
  std::filesystem::create_directories(path_);
  // keep checksums recorded by earlier verbs on the same run
  std::ifstream m(file("manifest.txt"));
  std::string line;
  while (std::getline(m, line)) {
    std::istringstream words(line);
    std::string hash, tag, name, sum;
    if (words >> hash >> tag >> name >> sum && hash == "#" && tag == "artifact") {
      artifacts_[name] = std::stoull(sum, nullptr, 16);
    }
  }
}

std::string RunDir::name_for(const TrainConfig& cfg) {
  return "run-" + hex64(cfg.hash()) + "-s" + std::to_string(cfg.seed);
}

void RunDir::write_manifest() const {
  const auto p = file("manifest.txt");
  std::ofstream m(p, std::ios::binary | std::ios::trunc);
  if (!m) throw std::runtime_error("cannot write " + p.string());
  m << "# bitforge run manifest; loadable with --config\n"
    << "# config_hash=" << hex64(cfg_.hash()) << "\n"
    << cfg_.to_text();
  for (const auto& [name, sum] : artifacts_) m << "# artifact " << name << " " << hex64(sum) << "\n";
}

void RunDir::record(const std::string& name) {
  artifacts_[name] = file_checksum(file(name));
  write_manifest();
}

std::uint64_t file_checksum(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  std::uint64_t h = 0xcbf29ce484222325ull;
  char buf[1 << 16];
  while (in) {
    in.read(buf, sizeof buf);
    h = fnv1a64(std::span(reinterpret_cast<const unsigned char*>(buf),
                          static_cast<std::size_t>(in.gcount())),
                h);
  }
  return h;
}

std::string stage_file(int input_depth) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "stage_%02d.ckpt", input_depth + 1);
  return buf;
}

}  // namespace bitforge
