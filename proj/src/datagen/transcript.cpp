#include "t2v/datagen/corpus.hpp"

namespace t2v::data {

std::vector<TranscriptChunk> merge_words(std::span<const Word> words, const MergeOptions& opts,
                                         std::string_view video_id) {
  if (opts.max_len == 0) throw ConfigError("merge_words: max_len must be positive");
  std::vector<TranscriptChunk> chunks;
  std::size_t in_chunk = 0;
  for (std::size_t i = 0; i < words.size(); ++i) {
    const Word& w = words[i];
    if (w.end_s < w.start_s) throw ValidationError("merge_words: word " + std::to_string(i) + " ends before it starts");
    if (i > 0 && w.start_s < words[i - 1].start_s) {
      throw ValidationError("merge_words: words not time-sorted at index " + std::to_string(i));
    }
    const bool joins = i > 0 && w.start_s - words[i - 1].end_s < opts.gap_s && in_chunk < opts.max_len;
    if (!joins) {
      chunks.push_back(TranscriptChunk{std::string(video_id), w.start_s, w.end_s, {}, {}});
      in_chunk = 0;
    }
    TranscriptChunk& c = chunks.back();
    if (!c.text.empty()) c.text += ' ';
    c.text += w.text;
    c.end_s = std::max(c.end_s, w.end_s);
    c.tokens.push_back(token_id(w.text, opts.vocab_size));
    ++in_chunk;
  }
  return chunks;
}

}  // namespace t2v::data
