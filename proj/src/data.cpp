#include "saco/data.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cstring>
#include <fstream>
#include <random>
#include <set>
#include <sstream>

#include <json.hpp>

#include "saco/error.hpp"
#include "saco/search.hpp"

namespace saco::core {

int Dataset::m() const { return items.empty() ? 0 : static_cast<int>(items.front().features->rows()); }

int Dataset::d_raw() const {
  return items.empty() ? 0 : static_cast<int>(items.front().features->cols());
}

std::vector<std::string> Dataset::references(int image_index, int style_id) const {
  std::vector<std::string> refs;
  for (const auto& it : items) {
    if (it.image_index == image_index && it.style_id == style_id) refs.push_back(it.caption_text);
  }
  return refs;
}

int Dataset::find_image(const std::string& image_id) const {
  for (std::size_t i = 0; i < items.size(); ++i) {
    if (items[i].image_id == image_id) return static_cast<int>(i);
  }
  return -1;
}

}  // namespace saco::core

namespace saco::data {

namespace fs = std::filesystem;

namespace {

static_assert(std::endian::native == std::endian::little, "blob codec assumes a little-endian host");

const std::array<const char*, kObjectInventory> kObjectNames = {
    "dog",   "cat",    "ball",  "tree",   "car",  "bench", "kite",  "horse", "boat",  "bird",
    "cake",  "flower", "chair", "guitar", "lamp", "bike",  "clock", "hat",   "train", "book"};

const std::array<const char*, 8> kStyleNames = {"happy",    "gloomy", "romantic", "sarcastic",
                                                "adventurous", "calm", "anxious", "playful"};

nlohmann::json manifest_json(const Manifest& manifest) {
  nlohmann::ordered_json j;
  j["styles"] = manifest.styles;
  j["items"] = nlohmann::ordered_json::array();
  for (const auto& item : manifest.items) {
    nlohmann::ordered_json ji;
    ji["image_id"] = item.image_id;
    ji["feature_file"] = item.feature_file;
    ji["m"] = item.m;
    ji["d_raw"] = item.d_raw;
    ji["objects"] = item.objects;
    ji["captions"] = nlohmann::ordered_json::array();
    for (const auto& c : item.captions) ji["captions"].push_back({{"style", c.style}, {"text", c.text}});
    j["items"].push_back(std::move(ji));
  }
  return j;
}

template <typename T>
T require_field(const nlohmann::json& j, const char* key, const std::string& where) {
  if (!j.contains(key)) throw ValidationError(where + ": missing field \"" + key + "\"");
  try {
    return j.at(key).get<T>();
  } catch (const nlohmann::json::exception&) {
    throw ValidationError(where + ": field \"" + key + "\" has the wrong type");
  }
}

}  // namespace

Matrix Manifest::load_features(std::size_t index) const {
  const auto& item = items.at(index);
  return read_blob(base_dir / item.feature_file, item.m, item.d_raw);
}

Matrix read_blob(const fs::path& path, int m, int d_raw) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot open feature blob " + path.string());
  in.seekg(0, std::ios::end);
  const auto actual = static_cast<std::uintmax_t>(in.tellg());
  const auto expected = static_cast<std::uintmax_t>(m) * static_cast<std::uintmax_t>(d_raw) * 4U;
  if (actual != expected) {
    throw ValidationError("feature blob " + path.string() + ": expected " + std::to_string(expected) +
                          " bytes, found " + std::to_string(actual));
  }
  in.seekg(0);
  std::vector<float> buf(static_cast<std::size_t>(m) * static_cast<std::size_t>(d_raw));
  in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(expected));
  Matrix out(m, d_raw);
  for (std::size_t i = 0; i < buf.size(); ++i) out.data()[i] = static_cast<double>(buf[i]);
  if (!out.allFinite()) throw ValidationError("feature blob " + path.string() + " has non-finite values");
  return out;
}

void write_blob(const fs::path& path, const Matrix& features) {
  std::vector<float> buf(static_cast<std::size_t>(features.size()));
  for (std::size_t i = 0; i < buf.size(); ++i) buf[i] = static_cast<float>(features.data()[i]);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw RuntimeError("cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size() * 4));
}

Manifest load_manifest(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open manifest " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError("manifest " + path.string() + ": " + e.what());
  }
  Manifest manifest;
  manifest.base_dir = path.parent_path();
  manifest.styles = require_field<std::vector<std::string>>(j, "styles", "manifest");
  if (manifest.styles.empty()) throw ValidationError("manifest: no styles");
  if (!j.contains("items") || !j["items"].is_array()) throw ValidationError("manifest: missing items");

  std::set<std::string> ids;
  for (const auto& ji : j["items"]) {
    ImageRecord item;
    item.image_id = require_field<std::string>(ji, "image_id", "manifest item");
    const std::string where = "manifest item " + item.image_id;
    if (!ids.insert(item.image_id).second) throw ValidationError(where + ": duplicate image_id");
    item.feature_file = require_field<std::string>(ji, "feature_file", where);
    item.m = require_field<int>(ji, "m", where);
    item.d_raw = require_field<int>(ji, "d_raw", where);
    if (item.m < 1 || item.d_raw < 1) throw ValidationError(where + ": m and d_raw must be >= 1");
    item.objects = require_field<std::vector<std::string>>(ji, "objects", where);
    if (item.objects.empty()) throw ValidationError(where + ": objects must not be empty");
    if (!ji.contains("captions") || !ji["captions"].is_array()) {
      throw ValidationError(where + ": missing captions");
    }
    for (const auto& jc : ji["captions"]) {
      CaptionRecord c;
      c.style = require_field<int>(jc, "style", where);
      c.text = require_field<std::string>(jc, "text", where);
      if (c.style < 0 || c.style >= static_cast<int>(manifest.styles.size())) {
        throw ValidationError(where + ": unknown style index " + std::to_string(c.style));
      }
      item.captions.push_back(std::move(c));
    }
    const auto blob = manifest.base_dir / item.feature_file;
    std::error_code ec;
    const auto bytes = fs::file_size(blob, ec);
    if (ec) throw ValidationError(where + ": cannot stat feature file " + blob.string());
    const auto expected = static_cast<std::uintmax_t>(item.m) * static_cast<std::uintmax_t>(item.d_raw) * 4U;
    if (bytes != expected) {
      throw ValidationError(where + ": feature file holds " + std::to_string(bytes) +
                            " bytes, expected " + std::to_string(expected));
    }
    manifest.items.push_back(std::move(item));
  }
  return manifest;
}

void save_manifest(const Manifest& manifest, const fs::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw RuntimeError("cannot write " + path.string());
  out << manifest_json(manifest).dump(2) << "\n";
}

std::vector<std::string> caption_corpus(const Manifest& manifest) {
  std::vector<std::string> corpus;
  for (const auto& item : manifest.items) {
    for (const auto& c : item.captions) corpus.push_back(c.text);
  }
  return corpus;
}

core::Dataset build_dataset(const Manifest& manifest, const core::Vocabulary& vocab, int max_tokens) {
  core::Dataset ds;
  ds.styles = manifest.styles;
  ds.num_images = static_cast<int>(manifest.items.size());
  ds.vocab = std::make_shared<const core::Vocabulary>(vocab);
  int m = -1;
  int d_raw = -1;
  for (std::size_t i = 0; i < manifest.items.size(); ++i) {
    const auto& rec = manifest.items[i];
    if (m < 0) {
      m = rec.m;
      d_raw = rec.d_raw;
    } else if (rec.m != m || rec.d_raw != d_raw) {
      throw ValidationError("manifest item " + rec.image_id + ": feature shape differs from the first item");
    }
    auto features = std::make_shared<const Matrix>(manifest.load_features(i));
    std::vector<std::string> objects = rec.objects;
    std::sort(objects.begin(), objects.end());
    objects.erase(std::unique(objects.begin(), objects.end()), objects.end());
    for (const auto& c : rec.captions) {
      core::DatasetItem item;
      item.image_id = rec.image_id;
      item.image_index = static_cast<int>(i);
      item.features = features;
      item.objects = objects;
      item.style_id = c.style;
      item.caption = core::tokenize(c.text, vocab);
      if (static_cast<int>(item.caption.size()) > max_tokens) item.caption.resize(static_cast<std::size_t>(max_tokens));
      item.caption_text = core::detokenize(item.caption, vocab);
      item.caption.push_back(core::kEos);
      ds.items.push_back(std::move(item));
    }
  }
  return ds;
}

Manifest generate_synthetic(const SyntheticSpec& spec, const fs::path& out_dir) {
  if (spec.n_items < 1 || spec.n_styles < 1 || spec.m < 1 || spec.d_raw < 1 || spec.vocab_size < 1) {
    throw ValidationError("synthetic dataset: sizes must all be >= 1");
  }
  std::mt19937_64 rng(spec.seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  const auto draw_int = [&rng](int lo, int hi) {  // inclusive
    return lo + static_cast<int>(search::uniform01(rng) * (hi - lo + 1));
  };

  // Each object owns a signature vector and a home slot in the feature grid.
  std::vector<Eigen::RowVectorXd> signature(kObjectInventory);
  std::vector<int> slot(kObjectInventory);
  for (int o = 0; o < kObjectInventory; ++o) {
    signature[static_cast<std::size_t>(o)] = Eigen::RowVectorXd(spec.d_raw);
    for (int c = 0; c < spec.d_raw; ++c) signature[static_cast<std::size_t>(o)](c) = normal(rng);
    slot[static_cast<std::size_t>(o)] = o % spec.m;
  }

  // Grammar: opener (2 words) ... closer; objects joined by "and"; a style
  // decorates the objects it focuses on with one of its modifiers.
  const int fixed_words = kObjectInventory + 2 + 3 * spec.n_styles;
  const int per_style = std::max(1, (spec.vocab_size - core::kNumSpecials - fixed_words) / spec.n_styles);
  std::vector<std::string> style_names;
  for (int s = 0; s < spec.n_styles; ++s) {
    style_names.push_back(s < static_cast<int>(kStyleNames.size()) ? kStyleNames[static_cast<std::size_t>(s)]
                                                                  : "style" + std::to_string(s));
  }
  const auto modifier = [&](int s, int o) {
    return style_names[static_cast<std::size_t>(s)].substr(0, 3) + "mod" + std::to_string(o % per_style);
  };
  const auto focuses = [&](int s, int o) { return o % spec.n_styles == s || (o * 7 + s) % 5 == 0; };

  fs::create_directories(out_dir / "features");
  Manifest manifest;
  manifest.styles = style_names;
  manifest.base_dir = out_dir;
  for (int i = 0; i < spec.n_items; ++i) {
    const int k = draw_int(2, 5);
    std::vector<int> chosen(kObjectInventory);
    for (int o = 0; o < kObjectInventory; ++o) chosen[static_cast<std::size_t>(o)] = o;
    for (int j = 0; j < k; ++j) {
      const int pick = draw_int(j, kObjectInventory - 1);
      std::swap(chosen[static_cast<std::size_t>(j)], chosen[static_cast<std::size_t>(pick)]);
    }
    chosen.resize(static_cast<std::size_t>(k));
    std::sort(chosen.begin(), chosen.end());

    Matrix features = Matrix::Zero(spec.m, spec.d_raw);
    for (int o : chosen) features.row(slot[static_cast<std::size_t>(o)]) += signature[static_cast<std::size_t>(o)];
    for (Eigen::Index r = 0; r < features.rows(); ++r) {
      for (Eigen::Index c = 0; c < features.cols(); ++c) features(r, c) += spec.noise * normal(rng);
    }

    const int style = draw_int(0, spec.n_styles - 1);
    const std::string& sname = style_names[static_cast<std::size_t>(style)];
    std::ostringstream caption;
    caption << sname << " view :";
    for (std::size_t j = 0; j < chosen.size(); ++j) {
      const int o = chosen[j];
      if (j > 0) caption << " and";
      caption << " a";
      if (focuses(style, o)) caption << ' ' << modifier(style, o);
      caption << ' ' << kObjectNames[static_cast<std::size_t>(o)];
    }
    caption << ' ' << sname.substr(0, 3) << "end";

    ImageRecord rec;
    char id[32];
    std::snprintf(id, sizeof id, "synth%04d", i);
    rec.image_id = id;
    rec.feature_file = "features/" + rec.image_id + ".f32";
    rec.m = spec.m;
    rec.d_raw = spec.d_raw;
    for (int o : chosen) rec.objects.emplace_back(kObjectNames[static_cast<std::size_t>(o)]);
    rec.captions.push_back({style, caption.str()});
    write_blob(out_dir / rec.feature_file, features);
    manifest.items.push_back(std::move(rec));
  }
  save_manifest(manifest, out_dir / "manifest.json");
  return manifest;
}

}  // namespace saco::data
