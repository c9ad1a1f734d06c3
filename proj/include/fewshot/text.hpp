#pragma once

#include <cstddef>
#include <iosfwd>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace fewshot {

using TokenSequence = std::vector<std::string>;

inline constexpr std::size_t kDefaultMaxSequenceLength = 256;

// Lowercases, maps every ASCII non-alphanumeric byte to a space and splits on
// whitespace. Bytes >= 0x80 are kept so UTF-8 words stay intact.
TokenSequence tokenize(std::string_view text, std::size_t max_length = kDefaultMaxSequenceLength);

class Vocabulary {
 public:
  static constexpr int kPadding = 0;
  static constexpr int kUnknown = 1;

  Vocabulary();

  // Tokens of `corpus` seen at least `min_frequency` times, then every token of
  // `forced` regardless of count. Ids follow first appearance.
  static Vocabulary build(std::span<const std::string> corpus, int min_frequency,
                          std::span<const std::string> forced = {});

  int id(std::string_view token) const;
  std::vector<int> ids(const TokenSequence& tokens) const;
  const std::string& token(int id) const;
  std::size_t size() const { return tokens_.size(); }
  bool contains(std::string_view token) const;

  // UTF-8 lines "token<TAB>id".
  void save(std::ostream& out) const;
  static Vocabulary load(std::istream& in);

  friend bool operator==(const Vocabulary& a, const Vocabulary& b) { return a.tokens_ == b.tokens_; }

 private:
  void add(const std::string& token);

  std::vector<std::string> tokens_;
  std::unordered_map<std::string, int> index_;
};

enum class TemplatePosition { Before, After };

inline constexpr std::string_view kDefaultTemplate = "Overall, the topic of the text is";

struct LabelTemplate {
  std::string text{kDefaultTemplate};
  TemplatePosition position = TemplatePosition::After;

  // Template stem joined with the class name.
  std::string render(std::string_view class_name) const;
};

// Joins the rendered label sentence with the original text, after it by default.
std::string apply_template(const LabelTemplate& tmpl, std::string_view class_name, std::string_view text);

TemplatePosition parse_template_position(std::string_view s);
std::string_view to_string(TemplatePosition p);

}  // namespace fewshot
