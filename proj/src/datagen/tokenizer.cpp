#include <cctype>

#include "t2v/datagen/corpus.hpp"

namespace t2v::data {

std::uint32_t token_id(std::string_view word, std::uint32_t vocab_size) {
  if (vocab_size == 0) throw ConfigError("vocab_size must be positive");
  std::uint64_t h = 0xcbf29ce484222325ULL;  // FNV-1a
  for (unsigned char c : word) {
    h ^= static_cast<std::uint64_t>(std::tolower(c));
    h *= 0x100000001b3ULL;
  }
  return static_cast<std::uint32_t>(h % vocab_size);
}

std::vector<std::uint32_t> tokenize(std::string_view text, std::uint32_t vocab_size) {
  std::vector<std::uint32_t> out;
  std::size_t i = 0;
  while (i < text.size()) {
    while (i < text.size() && std::isspace(static_cast<unsigned char>(text[i]))) ++i;
    std::size_t j = i;
    while (j < text.size() && !std::isspace(static_cast<unsigned char>(text[j]))) ++j;
    if (j > i) out.push_back(token_id(text.substr(i, j - i), vocab_size));
    i = j;
  }
  return out;
}

}  // namespace t2v::data
