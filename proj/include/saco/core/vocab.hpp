#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace saco::core {

using TokenId = std::int32_t;
using TokenSeq = std::vector<TokenId>;

inline constexpr TokenId kPad = 0;
inline constexpr TokenId kSos = 1;
inline constexpr TokenId kEos = 2;
inline constexpr TokenId kUnk = 3;
inline constexpr TokenId kNumSpecials = 4;

inline constexpr std::string_view kPadToken = "<PAD>";
inline constexpr std::string_view kSosToken = "<SOS>";
inline constexpr std::string_view kEosToken = "<EOS>";
inline constexpr std::string_view kUnkToken = "<UNK>";

/// Token <-> id mapping. Ids 0..3 are the special tokens in the order
/// <PAD>, <SOS>, <EOS>, <UNK>; ordinary tokens follow.
class Vocabulary {
 public:
  Vocabulary();

  /// Builds from an ordered list of ordinary tokens (specials are implied).
  explicit Vocabulary(const std::vector<std::string>& ordinary_tokens);

  std::size_t size() const { return id_to_token_.size(); }
  TokenId id(std::string_view token) const;  // kUnk when absent
  bool contains(std::string_view token) const;
  const std::string& token(TokenId id) const;  // throws on out-of-range

  const std::vector<std::string>& tokens() const { return id_to_token_; }

  std::string to_json() const;
  static Vocabulary from_json(const std::string& text);
  void save(const std::string& path) const;
  static Vocabulary load(const std::string& path);

  bool operator==(const Vocabulary& other) const { return id_to_token_ == other.id_to_token_; }

 private:
  std::vector<std::string> id_to_token_;
  std::unordered_map<std::string, TokenId> token_to_id_;
};

/// Lowercased whitespace split.
std::vector<std::string> split_words(std::string_view text);

/// Tokens with corpus frequency >= min_freq, ordered by frequency desc then
/// lexicographically. Throws ValidationError on an empty corpus, min_freq < 1,
/// or when no ordinary token survives.
Vocabulary build_vocab(const std::vector<std::string>& corpus, int min_freq);

TokenSeq tokenize(std::string_view text, const Vocabulary& vocab);

/// Drops <PAD>/<SOS>/<EOS>; <UNK> is rendered literally.
std::string detokenize(const TokenSeq& ids, const Vocabulary& vocab);

}  // namespace saco::core
