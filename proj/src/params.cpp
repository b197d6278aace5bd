#include "ssvae/params.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <stdexcept>

namespace ssvae {

void ParamSet::add(std::string name, Tensor value) {
  auto [it, inserted] = entries_.emplace(std::move(name), std::move(value));
  if (!inserted) {
    throw std::invalid_argument("params: duplicate entry '" + it->first + "'");
  }
}

Tensor& ParamSet::at(const std::string& name) {
  auto it = entries_.find(name);
  if (it == entries_.end()) throw std::invalid_argument("params: no entry '" + name + "'");
  return it->second;
}

const Tensor& ParamSet::at(const std::string& name) const {
  auto it = entries_.find(name);
  if (it == entries_.end()) throw std::invalid_argument("params: no entry '" + name + "'");
  return it->second;
}

std::size_t ParamSet::total_size() const {
  std::size_t n = 0;
  for (const auto& [_, t] : entries_) n += t.size();
  return n;
}

ParamSet init_params(const std::vector<ParamSpecEntry>& spec, RngStream& rng) {
  ParamSet out;
  for (const auto& e : spec) {
    Tensor t(e.shape);
    switch (e.init) {
      case Init::Zeros:
        break;
      case Init::Const:
        t = Tensor::full(e.shape, e.const_value);
        break;
      case Init::Glorot: {
        const std::size_t fan_in = t.rank() == 2 ? t.rows() : t.size();
        const std::size_t fan_out = t.rank() == 2 ? t.cols() : t.size();
        const double s = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
        for (auto& v : t.data()) v = (2.0 * rng.uniform() - 1.0) * s;
        break;
      }
    }
    out.add(e.name, std::move(t));
  }
  return out;
}

BoundParams::BoundParams(Tape& tape, const ParamSet& params, bool requires_grad) : tape_(&tape) {
  for (const auto& [name, tensor] : params.entries()) {
    vars_.emplace(name, tape.leaf(tensor, requires_grad));
  }
}

Var BoundParams::operator[](const std::string& name) const {
  auto it = vars_.find(name);
  if (it == vars_.end()) throw std::invalid_argument("params: unbound entry '" + name + "'");
  return it->second;
}

GradMap BoundParams::collect_grads(const ParamSet& params) const {
  GradMap out;
  for (const auto& [name, tensor] : params.entries()) {
    auto it = vars_.find(name);
    out.emplace(name, it == vars_.end() ? Tensor::zeros(tensor.shape()) : tape_->grad(it->second));
  }
  return out;
}

std::vector<std::pair<std::string, ParamSet*>> ModelParams::groups() {
  return {{"encoder", &encoder},
          {"decoder", &decoder},
          {"classifier", &classifier},
          {"baseline", &baseline}};
}

std::vector<std::pair<std::string, const ParamSet*>> ModelParams::groups() const {
  return {{"encoder", &encoder},
          {"decoder", &decoder},
          {"classifier", &classifier},
          {"baseline", &baseline}};
}

namespace {

constexpr char kMagic[4] = {'S', 'S', 'V', 'P'};
constexpr std::uint32_t kVersion = 1;

template <typename T>
void write_pod(std::ofstream& os, T v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(v));
}

template <typename T>
T read_pod(std::ifstream& is) {
  T v{};
  is.read(reinterpret_cast<char*>(&v), sizeof(v));
  if (!is) throw std::runtime_error("checkpoint: truncated file");
  return v;
}

void write_string(std::ofstream& os, const std::string& s) {
  write_pod<std::uint32_t>(os, static_cast<std::uint32_t>(s.size()));
  os.write(s.data(), static_cast<std::streamsize>(s.size()));
}

std::string read_string(std::ifstream& is) {
  auto n = read_pod<std::uint32_t>(is);
  std::string s(n, '\0');
  is.read(s.data(), n);
  if (!is) throw std::runtime_error("checkpoint: truncated string");
  return s;
}

}  // namespace

void save_checkpoint(const ModelParams& params, const std::string& path) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw std::runtime_error("checkpoint: cannot open '" + path + "' for writing");
  os.write(kMagic, 4);
  write_pod<std::uint32_t>(os, kVersion);
  auto groups = params.groups();
  write_pod<std::uint32_t>(os, static_cast<std::uint32_t>(groups.size()));
  for (const auto& [gname, set] : groups) {
    write_string(os, gname);
    write_pod<std::uint32_t>(os, static_cast<std::uint32_t>(set->entries().size()));
    for (const auto& [name, t] : set->entries()) {
      write_string(os, name);
      write_pod<std::uint32_t>(os, static_cast<std::uint32_t>(t.rank()));
      for (auto d : t.shape()) write_pod<std::uint64_t>(os, d);
      os.write(reinterpret_cast<const char*>(t.data().data()),
               static_cast<std::streamsize>(t.size() * sizeof(double)));
    }
  }
  if (!os) throw std::runtime_error("checkpoint: write to '" + path + "' failed");
}

ModelParams load_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("checkpoint: cannot open '" + path + "'");
  char magic[4];
  is.read(magic, 4);
  if (!is || std::memcmp(magic, kMagic, 4) != 0) {
    throw std::runtime_error("checkpoint: '" + path + "' is not a parameter file");
  }
  auto version = read_pod<std::uint32_t>(is);
  if (version != kVersion) {
    throw std::runtime_error("checkpoint: unsupported version " + std::to_string(version));
  }
  ModelParams out;
  auto ngroups = read_pod<std::uint32_t>(is);
  for (std::uint32_t g = 0; g < ngroups; ++g) {
    std::string gname = read_string(is);
    ParamSet* set = nullptr;
    for (auto& [name, p] : out.groups()) {
      if (name == gname) set = p;
    }
    if (set == nullptr) throw std::runtime_error("checkpoint: unknown group '" + gname + "'");
    auto nentries = read_pod<std::uint32_t>(is);
    for (std::uint32_t e = 0; e < nentries; ++e) {
      std::string name = read_string(is);
      auto rank = read_pod<std::uint32_t>(is);
      Shape shape(rank);
      for (auto& d : shape) d = read_pod<std::uint64_t>(is);
      Tensor t(shape);
      is.read(reinterpret_cast<char*>(t.data().data()),
              static_cast<std::streamsize>(t.size() * sizeof(double)));
      if (!is) throw std::runtime_error("checkpoint: truncated payload for '" + name + "'");
      set->add(std::move(name), std::move(t));
    }
  }
  return out;
}

std::uint64_t params_fingerprint(const ModelParams& params) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  auto mix = [&h](const void* p, std::size_t n) {
    auto* b = static_cast<const unsigned char*>(p);
    for (std::size_t i = 0; i < n; ++i) {
      h ^= b[i];
      h *= 0x100000001b3ULL;
    }
  };
  for (const auto& [gname, set] : params.groups()) {
    mix(gname.data(), gname.size());
    for (const auto& [name, t] : set->entries()) {
      mix(name.data(), name.size());
      mix(t.data().data(), t.size() * sizeof(double));
    }
  }
  return h;
}

}  // namespace ssvae
