#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "mflal/rng.hpp"
#include "mflal/tensor.hpp"

namespace mflal {

/// Ordered set of single-character symbols. Index 0 is PAD by default.
class Alphabet {
 public:
  explicit Alphabet(std::string symbols, std::size_t pad_index = 0);
  /// First `size` symbols of "_ABCDEFGHIJKLMNOPQRSTUVWXYZ0123456789", PAD = '_'.
  static Alphabet standard(std::size_t size);

  std::size_t size() const { return symbols_.size(); }
  std::size_t pad() const { return pad_; }
  char symbol(std::size_t id) const { return symbols_.at(id); }
  /// Throws std::invalid_argument for symbols outside the alphabet.
  int index_of(char symbol) const;
  const std::string& symbols() const { return symbols_; }

 private:
  std::string symbols_;
  std::size_t pad_;
};

/// Fixed-length token string; the design object.
struct Sequence {
  std::vector<int> ids;

  std::size_t length() const { return ids.size(); }
  friend bool operator==(const Sequence&, const Sequence&) = default;
  friend auto operator<=>(const Sequence&, const Sequence&) = default;
};

void validate(const Sequence& x, const Alphabet& alphabet);

std::string to_string(const Sequence& x, const Alphabet& alphabet);
Sequence parse_sequence(std::string_view text, const Alphabet& alphabet);
Sequence pad_sequence(std::size_t length, const Alphabet& alphabet);
Sequence random_sequence(std::size_t length, const Alphabet& alphabet, Rng& rng);

/// Flattened one-hot encoding, position-major: length L * A.
Tensor encode_one_hot(const Sequence& x, const Alphabet& alphabet);
/// Row-stacked encodings: batch x (L * A).
Tensor encode_batch(const std::vector<Sequence>& xs, const Alphabet& alphabet);

/// Samples one token per row of an L x A (or flat L*A) logits tensor.
/// Temperature 0 takes the argmax (lowest index on ties).
Sequence decode_sample(const Tensor& logits, std::size_t length, double temperature, Rng& rng);
Sequence decode_greedy(const Tensor& logits, std::size_t length);

/// Jaccard similarity of the two token-bigram sets.
double fingerprint_similarity(const Sequence& a, const Sequence& b);

/// Mean over unordered pairs; 0 for fewer than two sequences.
double mean_pairwise_similarity(const std::vector<Sequence>& xs);

}  // namespace mflal
