#include "ig/text_analysis.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <unordered_map>
#include <unordered_set>

#include "ig/errors.hpp"

namespace ig::text {

namespace {

const std::unordered_set<std::string>& verb_lexicon() {
  static const std::unordered_set<std::string> v = {
      "want",    "need",    "intend",   "aim",      "sit",     "rest",    "sleep",  "nap",
      "eat",     "drink",   "read",     "write",    "work",    "study",   "type",   "draw",
      "place",   "store",   "keep",     "organize", "hold",    "support", "watch",  "view",
      "display", "present", "show",     "cool",     "warm",    "heat",    "chill",  "relax",
      "stretch", "lean",    "recline",  "charge",   "plug",    "wash",    "clean",  "brighten",
      "light",   "freeze",  "preserve", "serve",    "enjoy",   "play",    "browse", "sketch",
      "review",  "finish",  "prepare",  "brainstorm", "unwind", "lie",    "settle", "relieve",
      "compose", "utilize", "assist",   "add",      "stash",   "tuck",    "dry",    "glance"};
  return v;
}

const std::unordered_set<std::string>& noun_lexicon() {
  static const std::unordered_set<std::string> n = {
      "meeting",   "conference", "legs",      "back",     "posture",  "book",      "books",
      "novel",     "magazine",   "notes",     "papers",   "documents", "belongings", "clothes",
      "meal",      "dinner",     "lunch",     "breakfast", "snack",    "food",      "groceries",
      "leftovers", "drinks",     "water",     "movie",    "film",      "show",      "slides",
      "chart",     "charts",     "presentation", "ideas", "laptop",    "work",      "face",
      "hands",     "dishes",     "air",       "breeze",   "room",      "evening",   "night",
      "afternoon", "day",        "days",      "hours",    "while",     "body",      "head",
      "feet",      "arms",       "something", "anything", "place",     "spot",      "session",
      "project",   "report",     "study",     "reading",  "greenery",  "plants",    "sketches",
      "diagrams",  "video",      "videos",    "game",     "games",     "clutter",   "items",
      "supplies",  "essentials", "warmth",    "light",    "glow",      "pressure",  "duration"};
  return n;
}

Pos lookup_pos(const std::string& tok, bool prev_was_det_or_adj, bool prev_was_to) {
  static const std::unordered_set<std::string> pronouns = {"i", "me", "my", "myself", "it", "them"};
  static const std::unordered_set<std::string> determiners = {"a", "an", "the", "this", "that",
                                                              "some", "few", "every"};
  static const std::unordered_set<std::string> adpositions = {"on",   "in",   "at",   "for", "with",
                                                              "during", "through", "of", "from",
                                                              "into", "onto", "near", "by", "under",
                                                              "over", "while"};
  static const std::unordered_set<std::string> adjectives = {"long",  "short", "quick", "quiet",
                                                             "comfortable", "cozy", "fresh", "cold",
                                                             "hot",   "warm",  "late",  "busy",
                                                             "upcoming", "online", "aesthetical"};
  static const std::unordered_set<std::string> adverbs = {"down", "up", "here", "there", "out",
                                                          "comfortably", "quietly", "properly",
                                                          "neatly", "briefly", "away", "together"};

  if (tok == "to") return Pos::Particle;
  if (tok == "and" || tok == "or" || tok == "so") return Pos::Other;
  if (pronouns.count(tok)) return Pos::Pronoun;
  if (determiners.count(tok)) return Pos::Determiner;
  if (!tok.empty() && std::ispunct(static_cast<unsigned char>(tok[0])) && tok.size() == 1)
    return Pos::Punct;

  // "to <word>" marks an infinitive; several words are both noun and verb
  // (work, study, light...) and the lexicons overlap on purpose.
  const bool is_verb = verb_lexicon().count(tok) > 0;
  const bool is_noun = noun_lexicon().count(tok) > 0;
  if (is_verb && is_noun) {
    if (prev_was_to) return Pos::Verb;
    if (prev_was_det_or_adj) return Pos::Noun;
    return Pos::Verb;
  }
  if (is_verb) return Pos::Verb;
  if (is_noun) return Pos::Noun;
  if (adpositions.count(tok)) return Pos::Adposition;
  if (adjectives.count(tok)) return Pos::Adjective;
  if (adverbs.count(tok)) return Pos::Adverb;
  if (prev_was_det_or_adj) return Pos::Noun;  // unknown word in noun slot
  return Pos::Other;
}

}  // namespace

struct LexiconTagger::Impl {};

LexiconTagger::LexiconTagger() : impl_(std::make_shared<Impl>()) {}

TagResult LexiconTagger::tag(const std::vector<std::string>& tokens) const {
  TagResult r;
  r.tags.reserve(tokens.size());
  bool prev_det_or_adj = false;
  bool prev_to = false;
  for (const auto& tok : tokens) {
    const Pos p = lookup_pos(tok, prev_det_or_adj, prev_to);
    r.tags.push_back(p);
    prev_det_or_adj = (p == Pos::Determiner || p == Pos::Adjective);
    prev_to = (tok == "to");
  }
  return r;
}

std::vector<int> TokenizedText::verb_indices() const {
  std::vector<int> out;
  for (int i = 0; i < length(); ++i)
    if (verb_positions[static_cast<std::size_t>(i)]) out.push_back(i);
  return out;
}

std::vector<std::string> tokenize(const std::string& text) {
  std::vector<std::string> tokens;
  std::string cur;
  auto flush = [&] {
    if (!cur.empty()) {
      tokens.push_back(cur);
      cur.clear();
    }
  };
  for (char ch : text) {
    const unsigned char c = static_cast<unsigned char>(ch);
    if (std::isspace(c)) {
      flush();
    } else if (std::ispunct(c) && c != '\'' && c != '-') {
      flush();
      tokens.push_back(std::string(1, ch));
    } else {
      cur.push_back(static_cast<char>(std::tolower(c)));
    }
  }
  flush();
  return tokens;
}

TokenizedText tokenize_and_tag(const std::string& input, const Tagger& tagger) {
  if (input.empty()) throw ValidationError("tokenize_and_tag: empty text");
  TokenizedText out;
  out.tokens = tokenize(input);
  if (out.tokens.empty()) throw ValidationError("tokenize_and_tag: no tokens in text");

  const TagResult tags = tagger.tag(out.tokens);
  if (tags.tags.size() != out.tokens.size()) {
    throw ValidationError("tokenize_and_tag: tagger returned wrong tag count for: " + input);
  }

  const int n = static_cast<int>(out.tokens.size());
  out.verb_positions.assign(static_cast<std::size_t>(n) + 1, 0);  // +1 for sentinel
  for (int i = 0; i < n; ++i) {
    if (tags.tags[static_cast<std::size_t>(i)] == Pos::Verb) out.verb_positions[static_cast<std::size_t>(i)] = 1;
  }

  // Direct object: first noun/pronoun after the verb, before the next verb.
  for (int i = 0; i < n; ++i) {
    if (tags.tags[static_cast<std::size_t>(i)] != Pos::Verb) continue;
    for (int j = i + 1; j < n; ++j) {
      const Pos pj = tags.tags[static_cast<std::size_t>(j)];
      if (pj == Pos::Verb) break;
      if (pj == Pos::Noun || (pj == Pos::Pronoun && out.tokens[static_cast<std::size_t>(j)] != "i" &&
                              out.tokens[static_cast<std::size_t>(j)] != "my")) {
        out.pairs.emplace_back(i, j);
        break;
      }
    }
  }

  out.tokens.push_back(kSentinelToken);
  out.has_sentinel = true;
  return out;
}

std::vector<double> verb_distribution(const std::vector<char>& v_pos,
                                      const std::vector<char>& mask) {
  const std::size_t n = v_pos.size();
  if (n == 0) throw ValidationError("verb_distribution: empty input");
  std::vector<char> m = mask.empty() ? std::vector<char>(n, 1) : mask;
  if (m.size() != n) throw ValidationError("verb_distribution: mask length mismatch");

  bool any_valid = false;
  for (char c : m) any_valid = any_valid || c;
  if (!any_valid) throw ValidationError("verb_distribution: all positions masked");

  std::vector<double> out(n, 0.0);
  double z = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    if (!m[i]) continue;
    out[i] = std::exp(v_pos[i] ? 1.0 : 0.0);
    z += out[i];
  }
  for (std::size_t i = 0; i < n; ++i) out[i] /= z;
  return out;
}

}  // namespace ig::text
