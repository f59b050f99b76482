#include "amfusion/archive.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <vector>

#include "amfusion/error.hpp"

namespace amfusion {

namespace {

constexpr char kMagic[8] = {'A', 'M', 'F', 'C', 'K', 'P', 'T', '\0'};

static_assert(std::endian::native == std::endian::little, "archive I/O assumes a little-endian host");

template <class T>
void put(std::ostream& out, T v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <class T>
T get(std::istream& in, const std::string& what) {
  T v{};
  if (!in.read(reinterpret_cast<char*>(&v), sizeof(T))) throw Error(ErrorKind::BadCheckpoint, "truncated " + what);
  return v;
}

}  // namespace

void write_archive(const std::filesystem::path& path, const TensorArchive& archive) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  nlohmann::json header;
  header["meta"] = archive.meta;
  header["tensors"] = nlohmann::json::array();
  std::size_t offset = 0;
  for (const auto& [name, t] : archive.tensors) {
    const Shape& s = t.shape();
    header["tensors"].push_back({{"name", name}, {"shape", {s.n, s.c, s.h, s.w}}, {"offset", offset}});
    offset += t.size();
  }
  header["payload_doubles"] = offset;
  const std::string text = header.dump();

  // Write to a sibling file and rename so a crash never leaves a torn archive.
  const std::filesystem::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorKind::FileNotFound, "cannot write " + tmp.string());
    out.write(kMagic, sizeof(kMagic));
    put<std::uint32_t>(out, TensorArchive::kFormatVersion);
    put<std::uint64_t>(out, text.size());
    out.write(text.data(), static_cast<std::streamsize>(text.size()));
    for (const auto& [name, t] : archive.tensors) {
      out.write(reinterpret_cast<const char*>(t.data()), static_cast<std::streamsize>(t.size() * sizeof(double)));
    }
    if (!out) throw Error(ErrorKind::FileNotFound, "write failed for " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

TensorArchive read_archive(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::FileNotFound, path.string());
  char magic[8];
  if (!in.read(magic, sizeof(magic)) || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) {
    throw Error(ErrorKind::BadCheckpoint, path.string() + " is not a tensor archive");
  }
  const auto version = get<std::uint32_t>(in, "version");
  if (version != TensorArchive::kFormatVersion) {
    throw Error(ErrorKind::BadCheckpoint, "unsupported archive version " + std::to_string(version));
  }
  const auto header_len = get<std::uint64_t>(in, "header length");
  std::string text(header_len, '\0');
  if (!in.read(text.data(), static_cast<std::streamsize>(header_len))) {
    throw Error(ErrorKind::BadCheckpoint, "truncated header");
  }
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::BadCheckpoint, std::string("header: ") + e.what());
  }
  const auto total = header.at("payload_doubles").get<std::size_t>();
  std::vector<double> payload(total);
  if (!in.read(reinterpret_cast<char*>(payload.data()), static_cast<std::streamsize>(total * sizeof(double)))) {
    throw Error(ErrorKind::BadCheckpoint, "truncated payload");
  }
  TensorArchive archive;
  archive.meta = header.at("meta");
  for (const auto& entry : header.at("tensors")) {
    const auto dims = entry.at("shape").get<std::vector<int>>();
    if (dims.size() != 4) throw Error(ErrorKind::BadCheckpoint, "tensor shape must have 4 dims");
    const Shape s{dims[0], dims[1], dims[2], dims[3]};
    const auto offset = entry.at("offset").get<std::size_t>();
    if (offset + s.numel() > total) throw Error(ErrorKind::BadCheckpoint, "tensor exceeds payload");
    std::vector<double> values(payload.begin() + static_cast<std::ptrdiff_t>(offset),
                               payload.begin() + static_cast<std::ptrdiff_t>(offset + s.numel()));
    archive.tensors.emplace(entry.at("name").get<std::string>(), Tensor(s, std::move(values)));
  }
  return archive;
}

void write_tensor_archive(const std::filesystem::path& path, const ParameterList& params, nlohmann::json meta) {
  TensorArchive archive;
  archive.meta = std::move(meta);
  for (const auto& p : params) archive.tensors.emplace(p.name, p.param->value());
  write_archive(path, archive);
}

void assign_parameters(const TensorArchive& archive, ParameterList& params) {
  for (auto& p : params) {
    const auto it = archive.tensors.find(p.name);
    if (it == archive.tensors.end()) throw Error(ErrorKind::BadCheckpoint, "missing tensor " + p.name);
    if (!(it->second.shape() == p.param->value().shape())) {
      throw Error(ErrorKind::BadCheckpoint, p.name + ": archive shape " + it->second.shape().str() +
                                                " vs model " + p.param->value().shape().str());
    }
    p.param->value() = it->second;
  }
}

nlohmann::json read_tensor_archive(const std::filesystem::path& path, ParameterList& params) {
  TensorArchive archive = read_archive(path);
  assign_parameters(archive, params);
  return archive.meta;
}

}  // namespace amfusion
