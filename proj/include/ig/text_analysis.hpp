#pragma once

#include <memory>
#include <string>
#include <vector>

namespace ig::text {

/// Appended to every tokenized sentence; unmatched queries align to it.
inline constexpr const char* kSentinelToken = "not mentioned";

enum class Pos { Verb, Noun, Pronoun, Determiner, Adposition, Adjective, Adverb, Particle, Punct, Other };

struct TagResult {
  std::vector<Pos> tags;  // one per token
};

/// Part-of-speech tagging contract. Implementations must be deterministic
/// on identical input.
class Tagger {
public:
  virtual ~Tagger() = default;
  virtual TagResult tag(const std::vector<std::string>& tokens) const = 0;
};

/// Rule + lexicon tagger covering the built-in phrase bank vocabulary.
/// Words absent from the lexicon are tagged as nouns when they follow a
/// determiner or adjective, otherwise Other.
class LexiconTagger : public Tagger {
public:
  LexiconTagger();
  TagResult tag(const std::vector<std::string>& tokens) const override;

private:
  struct Impl;
  std::shared_ptr<const Impl> impl_;
};

struct TokenizedText {
  std::vector<std::string> tokens;       // lowercased; sentinel appended last
  std::vector<char> verb_positions;      // V_pos, same length as tokens
  std::vector<std::pair<int, int>> pairs;  // (verb index, object index)
  bool has_sentinel = false;

  int length() const { return static_cast<int>(tokens.size()); }
  std::vector<int> verb_indices() const;
  int sentinel_index() const { return length() - 1; }
};

/// Lowercasing whitespace+punctuation tokenizer.
std::vector<std::string> tokenize(const std::string& text);

/// Tokenizes, tags, extracts verb positions and verb->direct-object pairs,
/// and appends the sentinel token. A verb's object is the first noun or
/// pronoun after it that precedes the next verb; verbs without one are
/// still flagged in verb_positions. Template stems (want/need/intend/aim)
/// count as verbs. Throws ValidationError on empty text.
TokenizedText tokenize_and_tag(const std::string& text, const Tagger& tagger);

/// Softmax over the binary verb-position vector, restricted to positions
/// where mask is nonzero (all positions if mask is empty). Verb positions
/// share equal mass, e times that of non-verb positions.
std::vector<double> verb_distribution(const std::vector<char>& v_pos,
                                      const std::vector<char>& mask = {});

}  // namespace ig::text
