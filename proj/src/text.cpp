#include "fewshot/text.hpp"

#include <cctype>
#include <istream>
#include <ostream>
#include <sstream>
#include <stdexcept>

namespace fewshot {

TokenSequence tokenize(std::string_view text, std::size_t max_length) {
  TokenSequence tokens;
  std::string current;
  auto flush = [&] {
    if (!current.empty() && tokens.size() < max_length) tokens.push_back(current);
    current.clear();
  };
  for (char ch : text) {
    const auto byte = static_cast<unsigned char>(ch);
    if (byte >= 0x80 || std::isalnum(byte)) {
      current.push_back(static_cast<char>(byte < 0x80 ? std::tolower(byte) : byte));
    } else {
      flush();
      if (tokens.size() >= max_length) break;
    }
  }
  flush();
  return tokens;
}

Vocabulary::Vocabulary() {
  add("<pad>");
  add("<unk>");
}

void Vocabulary::add(const std::string& token) {
  if (index_.contains(token)) return;
  index_.emplace(token, static_cast<int>(tokens_.size()));
  tokens_.push_back(token);
}

Vocabulary Vocabulary::build(std::span<const std::string> corpus, int min_frequency,
                             std::span<const std::string> forced) {
  if (corpus.empty()) throw std::invalid_argument("build_vocab: empty corpus");
  std::unordered_map<std::string, int> counts;
  std::vector<std::string> order;
  for (const auto& text : corpus) {
    for (auto& token : tokenize(text, std::string::npos)) {
      if (counts[token]++ == 0) order.push_back(std::move(token));
    }
  }
  Vocabulary vocab;
  for (const auto& token : order) {
    if (counts[token] >= min_frequency) vocab.add(token);
  }
  for (const auto& text : forced) {
    for (const auto& token : tokenize(text, std::string::npos)) vocab.add(token);
  }
  return vocab;
}

int Vocabulary::id(std::string_view token) const {
  auto it = index_.find(std::string(token));
  return it == index_.end() ? kUnknown : it->second;
}

bool Vocabulary::contains(std::string_view token) const { return index_.contains(std::string(token)); }

std::vector<int> Vocabulary::ids(const TokenSequence& tokens) const {
  std::vector<int> out;
  out.reserve(tokens.size());
  for (const auto& t : tokens) out.push_back(id(t));
  return out;
}

const std::string& Vocabulary::token(int id) const {
  if (id < 0 || id >= static_cast<int>(tokens_.size())) throw std::out_of_range("vocabulary id out of range");
  return tokens_[static_cast<std::size_t>(id)];
}

void Vocabulary::save(std::ostream& out) const {
  for (std::size_t i = 0; i < tokens_.size(); ++i) out << tokens_[i] << '\t' << i << '\n';
}

Vocabulary Vocabulary::load(std::istream& in) {
  Vocabulary vocab;
  vocab.tokens_.clear();
  vocab.index_.clear();
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto tab = line.rfind('\t');
    if (tab == std::string::npos) throw std::runtime_error("vocabulary line " + std::to_string(line_no) + ": missing tab");
    const std::string token = line.substr(0, tab);
    const int id = std::stoi(line.substr(tab + 1));
    if (id != static_cast<int>(vocab.tokens_.size())) {
      throw std::runtime_error("vocabulary line " + std::to_string(line_no) + ": ids must be contiguous");
    }
    vocab.add(token);
  }
  if (vocab.size() < 2 || vocab.tokens_[0] != "<pad>" || vocab.tokens_[1] != "<unk>") {
    throw std::runtime_error("vocabulary: reserved ids 0/1 missing");
  }
  return vocab;
}

std::string LabelTemplate::render(std::string_view class_name) const {
  std::string out = text;
  out += ' ';
  out += class_name;
  return out;
}

std::string apply_template(const LabelTemplate& tmpl, std::string_view class_name, std::string_view text) {
  if (class_name.empty()) throw std::invalid_argument("apply_template: empty class name");
  const std::string label = tmpl.render(class_name);
  std::string out;
  if (tmpl.position == TemplatePosition::After) {
    out.append(text).append(" ").append(label);
  } else {
    out.append(label).append(" ").append(text);
  }
  return out;
}

TemplatePosition parse_template_position(std::string_view s) {
  if (s == "after") return TemplatePosition::After;
  if (s == "before") return TemplatePosition::Before;
  throw std::invalid_argument("template position must be 'before' or 'after'");
}

std::string_view to_string(TemplatePosition p) { return p == TemplatePosition::After ? "after" : "before"; }

}  // namespace fewshot
