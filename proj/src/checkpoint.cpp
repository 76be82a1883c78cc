#include <bit>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <iterator>
#include <sstream>

#include "saco/error.hpp"
#include "saco/model.hpp"

namespace saco {

namespace {

constexpr char kMagic[8] = {'S', 'A', 'C', 'O', 'C', 'K', 'P', 'T'};
constexpr std::uint32_t kVersion = 1;

static_assert(std::endian::native == std::endian::little, "checkpoint codec assumes little endian");

template <typename T>
void put(std::ostream& out, T v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof v);
}

template <typename T>
T get(std::istream& in, const std::string& path) {
  T v{};
  if (!in.read(reinterpret_cast<char*>(&v), sizeof v)) throw ValidationError("truncated checkpoint " + path);
  return v;
}

struct Entry {
  std::string name;
  ad::Matrix value;
};

std::vector<Entry> read_archive(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot open checkpoint " + path);
  char magic[8];
  if (!in.read(magic, sizeof magic) || std::memcmp(magic, kMagic, sizeof magic) != 0) {
    throw ValidationError(path + " is not a checkpoint archive");
  }
  if (get<std::uint32_t>(in, path) != kVersion) throw ValidationError(path + ": unsupported version");
  const auto count = get<std::uint32_t>(in, path);
  std::vector<Entry> entries;
  for (std::uint32_t i = 0; i < count; ++i) {
    Entry e;
    const auto len = get<std::uint32_t>(in, path);
    e.name.resize(len);
    if (!in.read(e.name.data(), len)) throw ValidationError("truncated checkpoint " + path);
    const auto rows = get<std::uint32_t>(in, path);
    const auto cols = get<std::uint32_t>(in, path);
    e.value.resize(rows, cols);
    if (!in.read(reinterpret_cast<char*>(e.value.data()),
                 static_cast<std::streamsize>(sizeof(double) * rows * cols))) {
      throw ValidationError("truncated checkpoint " + path);
    }
    entries.push_back(std::move(e));
  }
  return entries;
}

}  // namespace

void save_checkpoint(const Model& model, const std::string& path) {
  {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw RuntimeError("cannot write checkpoint " + path);
    out.write(kMagic, sizeof kMagic);
    put<std::uint32_t>(out, kVersion);
    put<std::uint32_t>(out, static_cast<std::uint32_t>(model.params().size()));
    for (const auto& p : model.params()) {
      put<std::uint32_t>(out, static_cast<std::uint32_t>(p.name.size()));
      out.write(p.name.data(), static_cast<std::streamsize>(p.name.size()));
      put<std::uint32_t>(out, static_cast<std::uint32_t>(p.value.rows()));
      put<std::uint32_t>(out, static_cast<std::uint32_t>(p.value.cols()));
      out.write(reinterpret_cast<const char*>(p.value.data()),
                static_cast<std::streamsize>(sizeof(double) * static_cast<std::size_t>(p.value.size())));
    }
  }
  std::ofstream side(path + ".json", std::ios::binary);
  if (!side) throw RuntimeError("cannot write " + path + ".json");
  side << model.config().to_json().dump(2) << "\n";
}

void load_weights(Model& model, const std::string& path) {
  const auto entries = read_archive(path);
  if (entries.size() != model.params().size()) {
    throw ValidationError(path + ": holds " + std::to_string(entries.size()) + " arrays, model has " +
                          std::to_string(model.params().size()));
  }
  for (const auto& e : entries) {
    const auto id = model.params().find(e.name);
    if (id < 0) throw ValidationError(path + ": unknown parameter " + e.name);
    auto& target = model.params()[id].value;
    if (target.rows() != e.value.rows() || target.cols() != e.value.cols()) {
      throw ValidationError(path + ": shape mismatch for " + e.name);
    }
    target = e.value;
  }
}

std::unique_ptr<Model> load_checkpoint(const std::string& path) {
  std::ifstream side(path + ".json");
  if (!side) throw ValidationError("missing checkpoint config " + path + ".json");
  nlohmann::json j;
  try {
    side >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(path + ".json: " + e.what());
  }
  auto model = std::make_unique<Model>(ModelConfig::from_json(j));
  load_weights(*model, path);
  return model;
}

std::string file_hash(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot open " + path);
  std::uint64_t h = 1469598103934665603ULL;
  for (std::istreambuf_iterator<char> it(in), end; it != end; ++it) {
    h ^= static_cast<unsigned char>(*it);
    h *= 1099511628211ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace saco
