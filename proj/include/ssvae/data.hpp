#pragma once

#include <cstdint>
#include <istream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "ssvae/batch.hpp"
#include "ssvae/rng.hpp"

namespace ssvae {

// Reserved token strings for ids 0..3 (kPadId..kEosId in model.hpp).
extern const char* const kPadToken;
extern const char* const kUnkToken;
extern const char* const kBosToken;
extern const char* const kEosToken;

struct Document {
  int label = -1;  // -1 = unlabeled
  std::vector<std::string> tokens;  // lowercased, EOS-terminated
};

// Corpus format: one document per line, "label<TAB>text", label -1 marks
// unlabeled. Tokenization is lowercase + whitespace split, EOS appended,
// truncation to max_len (EOS included).
std::vector<Document> parse_corpus(std::istream& in, const std::string& name,
                                   std::size_t max_len);
std::vector<Document> load_corpus(const std::string& path, std::size_t max_len);

class Vocab {
 public:
  Vocab();

  // Most frequent tokens kept, ties broken lexicographically; max_size
  // caps the total table including the four reserved ids.
  static Vocab build(const std::vector<Document>& docs, std::size_t max_size,
                     std::size_t min_freq);

  int id_of(const std::string& token) const;  // UNK for unknown tokens
  const std::string& token_of(int id) const;
  std::size_t size() const { return id_to_token_.size(); }

  std::vector<int> encode(const std::vector<std::string>& tokens) const;

  void save(const std::string& path) const;  // "token<TAB>id" sorted by id
  static Vocab load(const std::string& path);

 private:
  std::map<std::string, int> token_to_id_;
  std::vector<std::string> id_to_token_;
};

struct SplitSpec {
  // labeled examples kept per class; SIZE_MAX = keep all
  std::size_t labeled_per_class = SIZE_MAX;
  double valid_frac = 0.20;
  double test_frac = 0.0;  // carved out first when no separate test file exists
  std::uint64_t seed = 1;
};

struct Splits {
  std::vector<Document> labeled;
  std::vector<Document> unlabeled;  // labels stripped
  std::vector<Document> valid;
  std::vector<Document> test;
  // original document indices per subset, for the manifest
  std::vector<std::size_t> labeled_idx, unlabeled_idx, valid_idx, test_idx;
  std::uint64_t seed = 0;
};

// Class-balanced semi-supervised split: per class, `labeled_per_class`
// documents stay labeled and the remainder move to the unlabeled pool
// with labels stripped. Valid (and test, when requested) are drawn
// class-balanced from the labeled pool before the shift. Documents
// arriving unlabeled go straight to the unlabeled pool.
Splits make_split(const std::vector<Document>& docs, const SplitSpec& spec);

std::string split_manifest_json(const Splits& s);

// Deterministic batch stream; final partial batch included. Bucketing
// groups similar lengths to limit padding, then shuffles batch order.
std::vector<Batch> make_batches(const std::vector<Document>& docs, const Vocab& vocab,
                                std::size_t batch_size, std::uint64_t seed, bool bucket_by_length,
                                bool keep_labels);

// Synthetic keyword corpus. Each class owns a disjoint keyword set; every
// body token is a class keyword with probability `signal`, otherwise a
// background token. Body lengths uniform in [len_lo, len_hi]. An optional
// keyword-free background prefix of `prefix` tokens precedes the body, so
// the label's value to a decoder sits `prefix` steps past the initial
// state. Background tokens draw from one of `styles` disjoint buckets
// chosen per document, a label-independent latent the encoder can use.
struct SynthSpec {
  std::size_t classes = 2;
  std::size_t vocab = 200;   // background tokens, split across styles
  std::size_t keywords_per_class = 20;
  std::size_t len_lo = 5;    // body length range
  std::size_t len_hi = 10;
  double signal = 0.3;
  std::size_t size = 5000;
  std::uint64_t seed = 1;
  std::size_t prefix = 0;
  std::size_t styles = 1;
};

std::vector<Document> synth_corpus(const SynthSpec& spec);

// Class owning `token` under the recipe, if it is a keyword.
std::optional<int> synth_keyword_class(const std::string& token, const SynthSpec& spec);

// Bayes-optimal accuracy in closed form: a document with at least one
// keyword is classified exactly, otherwise at chance, so
//   acc = 1 - (1 - 1/C) * E_L[(1 - signal)^L].
double synth_bayes_accuracy(const SynthSpec& spec);

}  // namespace ssvae
