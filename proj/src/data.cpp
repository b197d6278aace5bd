#include "ssvae/data.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "json.hpp"
#include "ssvae/model.hpp"

namespace ssvae {

const char* const kPadToken = "<pad>";
const char* const kUnkToken = "<unk>";
const char* const kBosToken = "<bos>";
const char* const kEosToken = "<eos>";

namespace {

bool is_reserved(const std::string& tok) {
  return tok == kPadToken || tok == kUnkToken || tok == kBosToken || tok == kEosToken;
}

// Fisher-Yates with the counter-based stream.
template <typename T>
void shuffle_vec(std::vector<T>& v, RngStream& rng) {
  for (std::size_t i = v.size(); i > 1; --i) {
    std::swap(v[i - 1], v[rng.next_u64() % i]);
  }
}

}  // namespace

std::vector<Document> parse_corpus(std::istream& in, const std::string& name,
                                   std::size_t max_len) {
  if (max_len < 2) throw std::invalid_argument("data: max_len must leave room for a token + EOS");
  std::vector<Document> docs;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();  // CRLF
    if (line.empty()) continue;
    const auto tab = line.find('\t');
    if (tab == std::string::npos) {
      throw std::runtime_error("data: " + name + ":" + std::to_string(line_no) +
                               ": missing label<TAB>text separator");
    }
    Document doc;
    try {
      doc.label = std::stoi(line.substr(0, tab));
    } catch (const std::exception&) {
      throw std::runtime_error("data: " + name + ":" + std::to_string(line_no) +
                               ": label '" + line.substr(0, tab) + "' is not an integer");
    }
    if (doc.label < -1) {
      throw std::runtime_error("data: " + name + ":" + std::to_string(line_no) +
                               ": label must be -1 or a class id");
    }
    std::istringstream words(line.substr(tab + 1));
    std::string w;
    while (words >> w && doc.tokens.size() + 1 < max_len) {
      for (auto& ch : w) ch = static_cast<char>(std::tolower(static_cast<unsigned char>(ch)));
      doc.tokens.push_back(w);
    }
    if (doc.tokens.empty()) {
      throw std::runtime_error("data: " + name + ":" + std::to_string(line_no) +
                               ": empty document text");
    }
    doc.tokens.push_back(kEosToken);
    docs.push_back(std::move(doc));
  }
  if (docs.empty()) throw std::runtime_error("data: " + name + ": empty corpus");
  return docs;
}

std::vector<Document> load_corpus(const std::string& path, std::size_t max_len) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("data: cannot open corpus '" + path + "'");
  return parse_corpus(in, path, max_len);
}

Vocab::Vocab() {
  for (const char* tok : {kPadToken, kUnkToken, kBosToken, kEosToken}) {
    token_to_id_.emplace(tok, static_cast<int>(id_to_token_.size()));
    id_to_token_.push_back(tok);
  }
}

Vocab Vocab::build(const std::vector<Document>& docs, std::size_t max_size,
                   std::size_t min_freq) {
  if (max_size < 5) throw std::invalid_argument("data: vocab max_size must exceed the reserved 4");
  std::map<std::string, std::size_t> counts;
  for (const auto& d : docs) {
    for (const auto& t : d.tokens) {
      if (!is_reserved(t)) ++counts[t];
    }
  }
  std::vector<std::pair<std::string, std::size_t>> ranked(counts.begin(), counts.end());
  // most frequent first, ties lexicographic
  std::sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
    return a.second != b.second ? a.second > b.second : a.first < b.first;
  });
  Vocab v;
  for (const auto& [tok, cnt] : ranked) {
    if (v.size() >= max_size) break;
    if (cnt < min_freq) break;
    v.token_to_id_.emplace(tok, static_cast<int>(v.id_to_token_.size()));
    v.id_to_token_.push_back(tok);
  }
  return v;
}

int Vocab::id_of(const std::string& token) const {
  auto it = token_to_id_.find(token);
  return it == token_to_id_.end() ? kUnkId : it->second;
}

const std::string& Vocab::token_of(int id) const {
  if (id < 0 || static_cast<std::size_t>(id) >= id_to_token_.size()) {
    throw std::invalid_argument("data: token id " + std::to_string(id) + " outside vocab");
  }
  return id_to_token_[static_cast<std::size_t>(id)];
}

std::vector<int> Vocab::encode(const std::vector<std::string>& tokens) const {
  std::vector<int> out;
  out.reserve(tokens.size());
  for (const auto& t : tokens) out.push_back(id_of(t));
  return out;
}

void Vocab::save(const std::string& path) const {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw std::runtime_error("data: cannot write vocab '" + path + "'");
  for (std::size_t i = 0; i < id_to_token_.size(); ++i) {
    os << id_to_token_[i] << '\t' << i << '\n';
  }
}

Vocab Vocab::load(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("data: cannot open vocab '" + path + "'");
  Vocab v;
  v.token_to_id_.clear();
  v.id_to_token_.clear();
  std::string line;
  while (std::getline(is, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto tab = line.find('\t');
    if (tab == std::string::npos) throw std::runtime_error("data: malformed vocab line");
    std::string tok = line.substr(0, tab);
    const int id = std::stoi(line.substr(tab + 1));
    if (static_cast<std::size_t>(id) != v.id_to_token_.size()) {
      throw std::runtime_error("data: vocab ids not dense at '" + tok + "'");
    }
    v.token_to_id_.emplace(tok, id);
    v.id_to_token_.push_back(std::move(tok));
  }
  if (v.size() < 4) throw std::runtime_error("data: vocab missing reserved entries");
  return v;
}

Splits make_split(const std::vector<Document>& docs, const SplitSpec& spec) {
  if (spec.valid_frac < 0.0 || spec.valid_frac >= 1.0 || spec.test_frac < 0.0 ||
      spec.test_frac >= 1.0) {
    throw std::invalid_argument("data: split fractions outside [0,1)");
  }
  Splits out;
  out.seed = spec.seed;

  std::map<int, std::vector<std::size_t>> per_class;
  for (std::size_t i = 0; i < docs.size(); ++i) {
    if (docs[i].label < 0) {
      out.unlabeled.push_back(docs[i]);
      out.unlabeled_idx.push_back(i);
    } else {
      per_class[docs[i].label].push_back(i);
    }
  }

  RngStream rng(spec.seed);
  for (auto& [label, idx] : per_class) {
    RngStream class_rng = rng.fork(static_cast<std::uint64_t>(label) + 101);
    shuffle_vec(idx, class_rng);

    const std::size_t n = idx.size();
    const std::size_t n_test = static_cast<std::size_t>(spec.test_frac * static_cast<double>(n));
    const std::size_t n_valid =
        static_cast<std::size_t>(spec.valid_frac * static_cast<double>(n));
    const std::size_t remaining = n - n_test - n_valid;
    const std::size_t n_labeled =
        spec.labeled_per_class == SIZE_MAX ? remaining : spec.labeled_per_class;
    if (remaining < n_labeled) {
      throw std::runtime_error("data: class " + std::to_string(label) + " has only " +
                               std::to_string(remaining) + " train documents, need " +
                               std::to_string(n_labeled) + " labeled");
    }

    std::size_t p = 0;
    for (std::size_t k = 0; k < n_test; ++k, ++p) {
      out.test.push_back(docs[idx[p]]);
      out.test_idx.push_back(idx[p]);
    }
    for (std::size_t k = 0; k < n_valid; ++k, ++p) {
      out.valid.push_back(docs[idx[p]]);
      out.valid_idx.push_back(idx[p]);
    }
    for (std::size_t k = 0; k < n_labeled; ++k, ++p) {
      out.labeled.push_back(docs[idx[p]]);
      out.labeled_idx.push_back(idx[p]);
    }
    for (; p < n; ++p) {
      Document d = docs[idx[p]];
      d.label = -1;  // stripped
      out.unlabeled.push_back(std::move(d));
      out.unlabeled_idx.push_back(idx[p]);
    }
  }
  return out;
}

std::string split_manifest_json(const Splits& s) {
  nlohmann::json j;
  j["seed"] = s.seed;
  j["labeled"] = s.labeled_idx;
  j["unlabeled"] = s.unlabeled_idx;
  j["valid"] = s.valid_idx;
  j["test"] = s.test_idx;
  return j.dump(2);
}

std::vector<Batch> make_batches(const std::vector<Document>& docs, const Vocab& vocab,
                                std::size_t batch_size, std::uint64_t seed, bool bucket_by_length,
                                bool keep_labels) {
  if (batch_size == 0) throw std::invalid_argument("data: batch_size must be positive");
  std::vector<std::size_t> order(docs.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  RngStream rng(seed);
  if (bucket_by_length) {
    std::stable_sort(order.begin(), order.end(), [&docs](std::size_t a, std::size_t b) {
      return docs[a].tokens.size() < docs[b].tokens.size();
    });
  } else {
    shuffle_vec(order, rng);
  }

  std::vector<std::vector<std::size_t>> groups;
  for (std::size_t start = 0; start < order.size(); start += batch_size) {
    const std::size_t end = std::min(order.size(), start + batch_size);
    groups.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(start),
                        order.begin() + static_cast<std::ptrdiff_t>(end));
  }
  if (bucket_by_length) shuffle_vec(groups, rng);

  std::vector<Batch> out;
  for (const auto& g : groups) {
    Batch b;
    b.n = g.size();
    for (auto i : g) b.max_len = std::max(b.max_len, docs[i].tokens.size());
    b.ids.assign(b.n * b.max_len, kPadId);
    b.mask.assign(b.n * b.max_len, 0.0);
    if (keep_labels) b.labels.emplace();
    for (std::size_t r = 0; r < g.size(); ++r) {
      const Document& d = docs[g[r]];
      const auto enc = vocab.encode(d.tokens);
      b.lengths.push_back(enc.size());
      for (std::size_t t = 0; t < enc.size(); ++t) {
        b.ids[r * b.max_len + t] = enc[t];
        b.mask[r * b.max_len + t] = 1.0;
      }
      if (keep_labels) {
        if (d.label < 0) {
          throw std::runtime_error("data: keep_labels batch met an unlabeled document");
        }
        b.labels->push_back(d.label);
      }
    }
    out.push_back(std::move(b));
  }
  return out;
}

namespace {
std::string synth_keyword(std::size_t cls, std::size_t j) {
  return "k" + std::to_string(cls) + "q" + std::to_string(j);
}
}  // namespace

std::vector<Document> synth_corpus(const SynthSpec& spec) {
  if (spec.signal < 0.0 || spec.signal > 1.0) {
    throw std::invalid_argument("data: synth signal outside [0,1]");
  }
  if (spec.classes < 1 || spec.len_lo < 1 || spec.len_hi < spec.len_lo || spec.styles < 1 ||
      spec.vocab < spec.styles) {
    throw std::invalid_argument("data: bad synth spec");
  }
  RngStream rng(spec.seed);
  const std::size_t bucket = spec.vocab / spec.styles;
  std::vector<Document> docs(spec.size);
  for (std::size_t i = 0; i < spec.size; ++i) {
    const std::size_t cls = i % spec.classes;  // exactly balanced
    const std::size_t style = rng.next_u64() % spec.styles;
    const std::size_t body =
        spec.len_lo + rng.next_u64() % (spec.len_hi - spec.len_lo + 1);
    Document d;
    d.label = static_cast<int>(cls);
    auto background = [&] {
      return "w" + std::to_string(style * bucket + rng.next_u64() % bucket);
    };
    for (std::size_t t = 0; t < spec.prefix; ++t) d.tokens.push_back(background());
    for (std::size_t t = 0; t < body; ++t) {
      if (rng.uniform() < spec.signal) {
        d.tokens.push_back(synth_keyword(cls, rng.next_u64() % spec.keywords_per_class));
      } else {
        d.tokens.push_back(background());
      }
    }
    d.tokens.push_back(kEosToken);
    docs[i] = std::move(d);
  }
  RngStream order_rng = rng.fork(0x0D0C5);
  shuffle_vec(docs, order_rng);
  return docs;
}

std::optional<int> synth_keyword_class(const std::string& token, const SynthSpec& spec) {
  for (std::size_t c = 0; c < spec.classes; ++c) {
    for (std::size_t j = 0; j < spec.keywords_per_class; ++j) {
      if (token == synth_keyword(c, j)) return static_cast<int>(c);
    }
  }
  return std::nullopt;
}

double synth_bayes_accuracy(const SynthSpec& spec) {
  double miss = 0.0;  // E_L[(1 - signal)^L]
  const std::size_t span = spec.len_hi - spec.len_lo + 1;
  for (std::size_t len = spec.len_lo; len <= spec.len_hi; ++len) {
    miss += std::pow(1.0 - spec.signal, static_cast<double>(len));
  }
  miss /= static_cast<double>(span);
  const double c = static_cast<double>(spec.classes);
  return 1.0 - (1.0 - 1.0 / c) * miss;
}

}  // namespace ssvae
