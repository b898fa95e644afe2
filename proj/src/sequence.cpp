#include "mflal/sequence.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <stdexcept>

#include "mflal/errors.hpp"

namespace mflal {

Alphabet::Alphabet(std::string symbols, std::size_t pad_index)
    : symbols_(std::move(symbols)), pad_(pad_index) {
  if (symbols_.size() < 2) throw std::invalid_argument("Alphabet: need at least two symbols");
  if (pad_ >= symbols_.size()) throw std::invalid_argument("Alphabet: PAD index out of range");
  std::string sorted = symbols_;
  std::sort(sorted.begin(), sorted.end());
  if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end()) {
    throw std::invalid_argument("Alphabet: symbols must be distinct");
  }
}

Alphabet Alphabet::standard(std::size_t size) {
  static const std::string kSymbols = "_ABCDEFGHIJKLMNOPQRSTUVWXYZ0123456789";
  if (size < 2 || size > kSymbols.size()) {
    throw std::invalid_argument("Alphabet::standard: size must be in [2, " +
                                std::to_string(kSymbols.size()) + "]");
  }
  return Alphabet(kSymbols.substr(0, size), 0);
}

int Alphabet::index_of(char symbol) const {
  const auto pos = symbols_.find(symbol);
  if (pos == std::string::npos) {
    throw std::invalid_argument(std::string("unknown symbol '") + symbol + "'");
  }
  return static_cast<int>(pos);
}

void validate(const Sequence& x, const Alphabet& alphabet) {
  for (std::size_t i = 0; i < x.ids.size(); ++i) {
    if (x.ids[i] < 0 || static_cast<std::size_t>(x.ids[i]) >= alphabet.size()) {
      throw std::invalid_argument("invalid token id " + std::to_string(x.ids[i]) + " at position " +
                                  std::to_string(i) + " for alphabet of size " +
                                  std::to_string(alphabet.size()));
    }
  }
}

std::string to_string(const Sequence& x, const Alphabet& alphabet) {
  validate(x, alphabet);
  std::string out;
  out.reserve(x.ids.size());
  for (int id : x.ids) out.push_back(alphabet.symbol(static_cast<std::size_t>(id)));
  return out;
}

Sequence parse_sequence(std::string_view text, const Alphabet& alphabet) {
  Sequence x;
  x.ids.reserve(text.size());
  for (char c : text) x.ids.push_back(alphabet.index_of(c));
  return x;
}

Sequence pad_sequence(std::size_t length, const Alphabet& alphabet) {
  return Sequence{std::vector<int>(length, static_cast<int>(alphabet.pad()))};
}

Sequence random_sequence(std::size_t length, const Alphabet& alphabet, Rng& rng) {
  Sequence x;
  x.ids.resize(length);
  for (int& id : x.ids) id = static_cast<int>(rng.uniform_int(alphabet.size()));
  return x;
}

Tensor encode_one_hot(const Sequence& x, const Alphabet& alphabet) {
  validate(x, alphabet);
  const std::size_t a = alphabet.size();
  const std::size_t width = x.length() * a;
  std::vector<double> values(width, 0.0);
  for (std::size_t i = 0; i < x.length(); ++i) values[i * a + static_cast<std::size_t>(x.ids[i])] = 1.0;
  return Tensor::from({width}, std::move(values));
}

Tensor encode_batch(const std::vector<Sequence>& xs, const Alphabet& alphabet) {
  if (xs.empty()) throw std::invalid_argument("encode_batch: empty batch");
  const std::size_t a = alphabet.size();
  const std::size_t width = xs.front().length() * a;
  std::vector<double> values(xs.size() * width, 0.0);
  for (std::size_t r = 0; r < xs.size(); ++r) {
    validate(xs[r], alphabet);
    if (xs[r].length() * a != width) throw ShapeError("encode_batch: sequences differ in length");
    for (std::size_t i = 0; i < xs[r].length(); ++i)
      values[r * width + i * a + static_cast<std::size_t>(xs[r].ids[i])] = 1.0;
  }
  return Tensor::from({xs.size(), width}, std::move(values));
}

Sequence decode_sample(const Tensor& logits, std::size_t length, double temperature, Rng& rng) {
  if (temperature < 0.0) throw std::invalid_argument("decode_sample: temperature must be >= 0");
  if (length == 0 || logits.size() % length != 0) {
    throw ShapeError("decode_sample: logits of shape " + shape_string(logits.shape()) +
                     " do not split into " + std::to_string(length) + " positions");
  }
  const std::size_t a = logits.size() / length;
  const auto v = logits.values();
  for (double x : v) {
    if (std::isnan(x)) throw NumericalError("decode_sample: NaN logits");
  }
  Sequence out;
  out.ids.resize(length);
  std::vector<double> probs(a);
  for (std::size_t i = 0; i < length; ++i) {
    const double* row = v.data() + i * a;
    const auto best = std::max_element(row, row + a) - row;
    if (temperature == 0.0) {
      out.ids[i] = static_cast<int>(best);
      continue;
    }
    double total = 0.0;
    for (std::size_t c = 0; c < a; ++c) total += (probs[c] = std::exp((row[c] - row[best]) / temperature));
    double u = rng.uniform() * total;
    std::size_t pick = a - 1;
    for (std::size_t c = 0; c < a; ++c) {
      if (u < probs[c]) {
        pick = c;
        break;
      }
      u -= probs[c];
    }
    out.ids[i] = static_cast<int>(pick);
  }
  return out;
}

Sequence decode_greedy(const Tensor& logits, std::size_t length) {
  Rng unused(0);
  return decode_sample(logits, length, 0.0, unused);
}

namespace {

std::set<std::pair<int, int>> bigrams(const Sequence& x) {
  std::set<std::pair<int, int>> out;
  for (std::size_t i = 0; i + 1 < x.ids.size(); ++i) out.emplace(x.ids[i], x.ids[i + 1]);
  return out;
}

}  // namespace

double fingerprint_similarity(const Sequence& a, const Sequence& b) {
  const auto sa = bigrams(a);
  const auto sb = bigrams(b);
  if (sa.empty() && sb.empty()) return 1.0;
  std::size_t common = 0;
  for (const auto& g : sa) common += sb.count(g);
  const std::size_t uni = sa.size() + sb.size() - common;
  return static_cast<double>(common) / static_cast<double>(uni);
}

double mean_pairwise_similarity(const std::vector<Sequence>& xs) {
  if (xs.size() < 2) return 0.0;
  double total = 0.0;
  std::size_t pairs = 0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    for (std::size_t j = i + 1; j < xs.size(); ++j) {
      total += fingerprint_similarity(xs[i], xs[j]);
      ++pairs;
    }
  }
  return total / static_cast<double>(pairs);
}

}  // namespace mflal
