#include "saco/core/vocab.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <map>
#include <sstream>

#include <json.hpp>

#include "saco/error.hpp"

namespace saco::core {

namespace {

std::vector<std::string> special_tokens() {
  return {std::string(kPadToken), std::string(kSosToken), std::string(kEosToken),
          std::string(kUnkToken)};
}

}  // namespace

Vocabulary::Vocabulary() : Vocabulary(std::vector<std::string>{}) {}

Vocabulary::Vocabulary(const std::vector<std::string>& ordinary_tokens) {
  id_to_token_ = special_tokens();
  id_to_token_.insert(id_to_token_.end(), ordinary_tokens.begin(), ordinary_tokens.end());
  for (std::size_t i = 0; i < id_to_token_.size(); ++i) {
    auto [it, inserted] = token_to_id_.emplace(id_to_token_[i], static_cast<TokenId>(i));
    if (!inserted) throw ValidationError("duplicate token in vocabulary: " + id_to_token_[i]);
  }
}

TokenId Vocabulary::id(std::string_view token) const {
  auto it = token_to_id_.find(std::string(token));
  return it == token_to_id_.end() ? kUnk : it->second;
}

bool Vocabulary::contains(std::string_view token) const {
  return token_to_id_.count(std::string(token)) > 0;
}

const std::string& Vocabulary::token(TokenId id) const {
  if (id < 0 || static_cast<std::size_t>(id) >= id_to_token_.size()) {
    throw ValidationError("token id out of range: " + std::to_string(id));
  }
  return id_to_token_[static_cast<std::size_t>(id)];
}

std::string Vocabulary::to_json() const {
  nlohmann::ordered_json j;
  j["tokens"] = id_to_token_;
  j["specials"] = {{std::string(kPadToken), kPad},
                   {std::string(kSosToken), kSos},
                   {std::string(kEosToken), kEos},
                   {std::string(kUnkToken), kUnk}};
  return j.dump(2) + "\n";
}

Vocabulary Vocabulary::from_json(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("vocabulary JSON: ") + e.what());
  }
  if (!j.contains("tokens") || !j["tokens"].is_array()) {
    throw ValidationError("vocabulary JSON: missing \"tokens\" array");
  }
  auto tokens = j["tokens"].get<std::vector<std::string>>();
  const auto specials = special_tokens();
  if (tokens.size() < specials.size() ||
      !std::equal(specials.begin(), specials.end(), tokens.begin())) {
    throw ValidationError("vocabulary JSON: special tokens must occupy ids 0-3");
  }
  return Vocabulary(std::vector<std::string>(tokens.begin() + kNumSpecials, tokens.end()));
}

void Vocabulary::save(const std::string& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw RuntimeError("cannot write " + path);
  out << to_json();
}

Vocabulary Vocabulary::load(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot open vocabulary file " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return from_json(ss.str());
}

std::vector<std::string> split_words(std::string_view text) {
  std::vector<std::string> words;
  std::string current;
  for (char c : text) {
    if (std::isspace(static_cast<unsigned char>(c))) {
      if (!current.empty()) words.push_back(std::move(current));
      current.clear();
    } else {
      current.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
    }
  }
  if (!current.empty()) words.push_back(std::move(current));
  return words;
}

Vocabulary build_vocab(const std::vector<std::string>& corpus, int min_freq) {
  if (corpus.empty()) throw ValidationError("build_vocab: empty corpus");
  if (min_freq < 1) throw ValidationError("build_vocab: min_freq must be >= 1");

  std::map<std::string, long> counts;
  for (const auto& line : corpus) {
    for (auto& w : split_words(line)) ++counts[w];
  }
  std::vector<std::pair<std::string, long>> kept;
  for (auto& [word, n] : counts) {
    if (n >= min_freq) kept.emplace_back(word, n);
  }
  std::stable_sort(kept.begin(), kept.end(),
                   [](const auto& a, const auto& b) { return a.second > b.second; });
  if (kept.empty()) throw ValidationError("build_vocab: no token reaches min_freq");

  std::vector<std::string> ordinary;
  ordinary.reserve(kept.size());
  for (auto& [word, n] : kept) ordinary.push_back(word);
  return Vocabulary(ordinary);
}

TokenSeq tokenize(std::string_view text, const Vocabulary& vocab) {
  TokenSeq ids;
  for (const auto& w : split_words(text)) ids.push_back(vocab.id(w));
  return ids;
}

std::string detokenize(const TokenSeq& ids, const Vocabulary& vocab) {
  std::string out;
  for (TokenId id : ids) {
    const std::string& tok = vocab.token(id);
    if (id == kPad || id == kSos || id == kEos) continue;
    if (!out.empty()) out.push_back(' ');
    out += tok;
  }
  return out;
}

}  // namespace saco::core
