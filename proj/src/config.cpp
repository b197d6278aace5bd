#include "ssvae/config.hpp"

#include <fstream>
#include <sstream>
#include <stdexcept>

namespace ssvae {

namespace {

std::size_t to_size(const std::string& key, const std::string& v) {
  try {
    return static_cast<std::size_t>(std::stoull(v));
  } catch (const std::exception&) {
    throw std::invalid_argument("config: " + key + ": '" + v + "' is not a nonnegative integer");
  }
}

double to_double(const std::string& key, const std::string& v) {
  try {
    return std::stod(v);
  } catch (const std::exception&) {
    throw std::invalid_argument("config: " + key + ": '" + v + "' is not a number");
  }
}

bool to_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw std::invalid_argument("config: " + key + ": '" + v + "' is not a boolean");
}

}  // namespace

void RunConfig::finalize() {
  if (data_source == "synth") model.classes = synth.classes;
  train.epochs = epochs;
  train.batch_size = batch_size;
  train.seed = seed;
  train.dropout = model.dropout;
  train.estimator.validate();
}

void apply_paper_profile(RunConfig& cfg) {
  cfg.model.cell_width = 512;
  cfg.model.embed_width = 300;
  cfg.model.latent_width = 50;
  cfg.train.adam.lr = 4e-3;
  cfg.vocab_max_size = 20000;
  cfg.max_len = 400;
}

void apply_kv(RunConfig& cfg, const std::string& key, const std::string& value) {
  if (key == "seed") cfg.seed = to_size(key, value);
  else if (key == "out_dir") cfg.out_dir = value;
  else if (key == "epochs") cfg.epochs = to_size(key, value);
  else if (key == "batch_size") cfg.batch_size = to_size(key, value);
  else if (key == "data.source") {
    if (value != "synth" && value != "file") {
      throw std::invalid_argument("config: data.source must be synth or file");
    }
    cfg.data_source = value;
  } else if (key == "data.train") cfg.data_train = value;
  else if (key == "data.test") cfg.data_test = value;
  else if (key == "data.max_len") cfg.max_len = to_size(key, value);
  else if (key == "synth.classes") cfg.synth.classes = to_size(key, value);
  else if (key == "synth.vocab") cfg.synth.vocab = to_size(key, value);
  else if (key == "synth.keywords") cfg.synth.keywords_per_class = to_size(key, value);
  else if (key == "synth.len_lo") cfg.synth.len_lo = to_size(key, value);
  else if (key == "synth.len_hi") cfg.synth.len_hi = to_size(key, value);
  else if (key == "synth.signal") cfg.synth.signal = to_double(key, value);
  else if (key == "synth.size") cfg.synth.size = to_size(key, value);
  else if (key == "synth.seed") cfg.synth.seed = to_size(key, value);
  else if (key == "synth.prefix") cfg.synth.prefix = to_size(key, value);
  else if (key == "synth.styles") cfg.synth.styles = to_size(key, value);
  else if (key == "vocab.max_size") cfg.vocab_max_size = to_size(key, value);
  else if (key == "vocab.min_freq") cfg.vocab_min_freq = to_size(key, value);
  else if (key == "split.labeled_per_class") {
    cfg.labeled_per_class = value == "all" ? SIZE_MAX : to_size(key, value);
  } else if (key == "split.valid_frac") cfg.valid_frac = to_double(key, value);
  else if (key == "split.test_frac") cfg.test_frac = to_double(key, value);
  else if (key == "model.classes") cfg.model.classes = to_size(key, value);
  else if (key == "model.cell_kind") cfg.model.decoder_cell = cell_kind_from_string(value);
  else if (key == "model.cell_width") cfg.model.cell_width = to_size(key, value);
  else if (key == "model.embed_width") cfg.model.embed_width = to_size(key, value);
  else if (key == "model.latent_width") cfg.model.latent_width = to_size(key, value);
  else if (key == "model.dropout") cfg.model.dropout = to_double(key, value);
  else if (key == "opt.lr") cfg.train.adam.lr = to_double(key, value);
  else if (key == "opt.beta1") cfg.train.adam.beta1 = to_double(key, value);
  else if (key == "opt.beta2") cfg.train.adam.beta2 = to_double(key, value);
  else if (key == "opt.eps") cfg.train.adam.eps = to_double(key, value);
  else if (key == "opt.clip_norm") cfg.train.clip_norm = to_double(key, value);
  else if (key == "sched.kl_start") cfg.train.schedules.kl.start = to_double(key, value);
  else if (key == "sched.kl_end") cfg.train.schedules.kl.end = to_double(key, value);
  else if (key == "sched.wdrop_start") cfg.train.schedules.word_dropout.start = to_double(key, value);
  else if (key == "sched.wdrop_end") cfg.train.schedules.word_dropout.end = to_double(key, value);
  else if (key == "sched.alpha_start") cfg.train.schedules.alpha.start = to_double(key, value);
  else if (key == "sched.alpha_end") cfg.train.schedules.alpha.end = to_double(key, value);
  else if (key == "sched.ramp_frac") {
    const double r = to_double(key, value);
    cfg.train.schedules.kl.ramp_frac = r;
    cfg.train.schedules.word_dropout.ramp_frac = r;
    cfg.train.schedules.alpha.ramp_frac = r;
  } else if (key == "est.kind") cfg.train.estimator.kind = estimator_kind_from_string(value);
  else if (key == "est.baseline") cfg.train.estimator.baseline = baseline_kind_from_string(value);
  else if (key == "est.k") cfg.train.estimator.k = static_cast<int>(to_size(key, value));
  else if (key == "train.patience") cfg.train.patience = to_size(key, value);
  else if (key == "train.use_unlabeled") cfg.train.use_unlabeled = to_bool(key, value);
  else if (key == "train.bucket") cfg.train.bucket_by_length = to_bool(key, value);
  else if (key == "train.baseline_lr") cfg.train.baseline_lr = to_double(key, value);
  else if (key == "train.track_d_index") cfg.train.track_d_index = to_bool(key, value);
  else if (key == "profile") {
    if (value == "paper") apply_paper_profile(cfg);
    else if (value != "desk") throw std::invalid_argument("config: profile must be desk or paper");
  } else {
    throw std::invalid_argument("config: unknown key '" + key + "'");
  }
}

RunConfig parse_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::invalid_argument("config: cannot open '" + path + "'");
  RunConfig cfg;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    const auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    // trim
    const auto b = line.find_first_not_of(" \t");
    if (b == std::string::npos) continue;
    const auto e = line.find_last_not_of(" \t");
    line = line.substr(b, e - b + 1);
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw std::invalid_argument("config: " + path + ":" + std::to_string(line_no) +
                                  ": expected key=value");
    }
    apply_kv(cfg, line.substr(0, eq), line.substr(eq + 1));
  }
  return cfg;
}

std::string serialize_config(const RunConfig& cfg) {
  std::ostringstream os;
  os.precision(17);
  os << "seed=" << cfg.seed << '\n'
     << "out_dir=" << cfg.out_dir << '\n'
     << "epochs=" << cfg.epochs << '\n'
     << "batch_size=" << cfg.batch_size << '\n'
     << "data.source=" << cfg.data_source << '\n'
     << "data.train=" << cfg.data_train << '\n'
     << "data.test=" << cfg.data_test << '\n'
     << "data.max_len=" << cfg.max_len << '\n'
     << "synth.classes=" << cfg.synth.classes << '\n'
     << "synth.vocab=" << cfg.synth.vocab << '\n'
     << "synth.keywords=" << cfg.synth.keywords_per_class << '\n'
     << "synth.len_lo=" << cfg.synth.len_lo << '\n'
     << "synth.len_hi=" << cfg.synth.len_hi << '\n'
     << "synth.signal=" << cfg.synth.signal << '\n'
     << "synth.size=" << cfg.synth.size << '\n'
     << "synth.seed=" << cfg.synth.seed << '\n'
     << "synth.prefix=" << cfg.synth.prefix << '\n'
     << "synth.styles=" << cfg.synth.styles << '\n'
     << "vocab.max_size=" << cfg.vocab_max_size << '\n'
     << "vocab.min_freq=" << cfg.vocab_min_freq << '\n'
     << "split.labeled_per_class="
     << (cfg.labeled_per_class == SIZE_MAX ? std::string("all")
                                           : std::to_string(cfg.labeled_per_class))
     << '\n'
     << "split.valid_frac=" << cfg.valid_frac << '\n'
     << "split.test_frac=" << cfg.test_frac << '\n'
     << "model.classes=" << cfg.model.classes << '\n'
     << "model.cell_kind=" << to_string(cfg.model.decoder_cell) << '\n'
     << "model.cell_width=" << cfg.model.cell_width << '\n'
     << "model.embed_width=" << cfg.model.embed_width << '\n'
     << "model.latent_width=" << cfg.model.latent_width << '\n'
     << "model.dropout=" << cfg.model.dropout << '\n'
     << "opt.lr=" << cfg.train.adam.lr << '\n'
     << "opt.beta1=" << cfg.train.adam.beta1 << '\n'
     << "opt.beta2=" << cfg.train.adam.beta2 << '\n'
     << "opt.eps=" << cfg.train.adam.eps << '\n'
     << "opt.clip_norm=" << cfg.train.clip_norm << '\n'
     << "sched.kl_start=" << cfg.train.schedules.kl.start << '\n'
     << "sched.kl_end=" << cfg.train.schedules.kl.end << '\n'
     << "sched.wdrop_start=" << cfg.train.schedules.word_dropout.start << '\n'
     << "sched.wdrop_end=" << cfg.train.schedules.word_dropout.end << '\n'
     << "sched.alpha_start=" << cfg.train.schedules.alpha.start << '\n'
     << "sched.alpha_end=" << cfg.train.schedules.alpha.end << '\n'
     << "sched.ramp_frac=" << cfg.train.schedules.kl.ramp_frac << '\n'
     << "est.kind=" << to_string(cfg.train.estimator.kind) << '\n'
     << "est.baseline=" << to_string(cfg.train.estimator.baseline) << '\n'
     << "est.k=" << cfg.train.estimator.k << '\n'
     << "train.patience=" << cfg.train.patience << '\n'
     << "train.use_unlabeled=" << (cfg.train.use_unlabeled ? "true" : "false") << '\n'
     << "train.bucket=" << (cfg.train.bucket_by_length ? "true" : "false") << '\n'
     << "train.baseline_lr=" << cfg.train.baseline_lr << '\n'
     << "train.track_d_index=" << (cfg.train.track_d_index ? "true" : "false") << '\n';
  return os.str();
}

DataBundle prepare_data(const RunConfig& cfg) {
  DataBundle out;
  if (cfg.data_source == "synth") {
    out.documents = synth_corpus(cfg.synth);
  } else {
    if (cfg.data_train.empty()) {
      throw std::invalid_argument("config: data.train is required when data.source=file");
    }
    out.documents = load_corpus(cfg.data_train, cfg.max_len);
  }
  out.vocab = Vocab::build(out.documents, cfg.vocab_max_size, cfg.vocab_min_freq);
  SplitSpec spec;
  spec.labeled_per_class = cfg.labeled_per_class;
  spec.valid_frac = cfg.valid_frac;
  // a separate test file supersedes carving test out of train
  spec.test_frac = cfg.data_test.empty() ? cfg.test_frac : 0.0;
  spec.seed = mix_seed(cfg.seed, 0x5137);
  out.splits = make_split(out.documents, spec);
  if (!cfg.data_test.empty()) {
    out.splits.test = load_corpus(cfg.data_test, cfg.max_len);
  }
  for (const auto& d : out.splits.labeled) {
    if (d.label >= 0 && static_cast<std::size_t>(d.label) >= cfg.model.classes) {
      throw std::invalid_argument("config: label " + std::to_string(d.label) +
                                  " exceeds model.classes=" + std::to_string(cfg.model.classes));
    }
  }
  return out;
}

}  // namespace ssvae
