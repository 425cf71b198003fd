#include "visita/checkpoint.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <map>

#include "visita/error.hpp"

namespace visita {

namespace {

template <class T>
void put_le(std::string& out, T v) {
  using U = std::make_unsigned_t<T>;
  auto u = static_cast<U>(v);
  for (std::size_t i = 0; i < sizeof(T); ++i) out.push_back(static_cast<char>((u >> (8 * i)) & 0xff));
}

class Reader {
 public:
  Reader(std::string_view bytes, std::string_view what) : bytes_(bytes), what_(what) {}

  bool at_end() const noexcept { return pos_ == bytes_.size(); }

  template <class T>
  T get(const char* field) {
    need(sizeof(T), field);
    std::make_unsigned_t<T> u = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i) {
      u |= static_cast<std::make_unsigned_t<T>>(static_cast<unsigned char>(bytes_[pos_ + i])) << (8 * i);
    }
    pos_ += sizeof(T);
    return static_cast<T>(u);
  }

  std::string_view take(std::size_t n, const char* field) {
    need(n, field);
    auto s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }

 private:
  void need(std::size_t n, const char* field) const {
    if (bytes_.size() - pos_ < n) {
      throw FormatError(std::string(what_) + ": truncated MKVT container while reading " + field + " at byte " +
                        std::to_string(pos_));
    }
  }

  std::string_view bytes_;
  std::string_view what_;
  std::size_t pos_ = 0;
};

[[noreturn]] void fail_at(std::string_view what, const std::string& msg) {
  throw FormatError(std::string(what) + ": " + msg);
}

NamedTensor scalar(std::string name, double v) { return {std::move(name), {}, {v}}; }

NamedTensor matrix_tensor(std::string name, const Matrix& m) {
  auto v = m.values();
  return {std::move(name), {static_cast<std::uint32_t>(m.rows()), static_cast<std::uint32_t>(m.cols())},
          std::vector<double>(v.begin(), v.end())};
}

NamedTensor vector_tensor(std::string name, std::span<const double> v) {
  return {std::move(name), {static_cast<std::uint32_t>(v.size())}, std::vector<double>(v.begin(), v.end())};
}

constexpr const char* kVocabPrefix = "vocab:";

struct ConfigField {
  const char* name;
  std::size_t ModelConfig::*member;
};

constexpr ConfigField kConfigFields[] = {
    {"config.image_size", &ModelConfig::image_size},   {"config.channels", &ModelConfig::channels},
    {"config.patch_size", &ModelConfig::patch_size},   {"config.conv_channels", &ModelConfig::conv_channels},
    {"config.d_model", &ModelConfig::d_model},         {"config.d_embed", &ModelConfig::d_embed},
    {"config.heads", &ModelConfig::heads},             {"config.blocks", &ModelConfig::blocks},
    {"config.ffn_hidden", &ModelConfig::ffn_hidden},   {"config.caption_len", &ModelConfig::caption_len},
    {"config.vocab_size", &ModelConfig::vocab_size},
};

}  // namespace

std::string encode_tensors(std::span<const NamedTensor> tensors) {
  std::string out(kCheckpointMagic, 4);
  put_le<std::uint32_t>(out, kCheckpointVersion);
  for (const auto& t : tensors) {
    if (t.name.empty() || t.name.size() > 0xffff) throw InvalidInputError("tensor name length out of range");
    if (t.dims.size() > 0xff) throw InvalidInputError("tensor " + t.name + " has too many dimensions");
    std::size_t n = 1;
    for (auto d : t.dims) n *= d;
    if (n != t.values.size()) {
      throw ShapeError("tensor " + t.name + " holds " + std::to_string(t.values.size()) + " values for " +
                       std::to_string(n) + " cells");
    }
    put_le<std::uint16_t>(out, static_cast<std::uint16_t>(t.name.size()));
    out += t.name;
    put_le<std::uint8_t>(out, static_cast<std::uint8_t>(t.dims.size()));
    for (auto d : t.dims) put_le<std::uint32_t>(out, d);
    for (double v : t.values) put_le<std::uint64_t>(out, std::bit_cast<std::uint64_t>(v));
  }
  return out;
}

std::vector<NamedTensor> decode_tensors(std::string_view bytes, std::string_view what) {
  if (bytes.size() < 4 || std::memcmp(bytes.data(), kCheckpointMagic, 4) != 0) {
    throw FormatError(std::string(what) + ": missing MKVT magic");
  }
  Reader in(bytes.substr(4), what);
  const auto version = in.get<std::uint32_t>("version");
  if (version != kCheckpointVersion) {
    throw UnsupportedFormatError(std::string(what) + ": MKVT version " + std::to_string(version) + " (expected " +
                                 std::to_string(kCheckpointVersion) + ")");
  }
  std::vector<NamedTensor> out;
  while (!in.at_end()) {
    NamedTensor t;
    const auto len = in.get<std::uint16_t>("name length");
    t.name = std::string(in.take(len, "tensor name"));
    const auto rank = in.get<std::uint8_t>("rank");
    std::size_t n = 1;
    for (std::uint8_t r = 0; r < rank; ++r) {
      t.dims.push_back(in.get<std::uint32_t>("dimension"));
      n *= t.dims.back();
    }
    // Bound the allocation by what the buffer can still hold.
    if (n > bytes.size() / 8 + 1) {
      throw FormatError(std::string(what) + ": truncated MKVT container, tensor " + t.name + " claims " +
                        std::to_string(n) + " values");
    }
    t.values.resize(n);
    for (auto& v : t.values) v = std::bit_cast<double>(in.get<std::uint64_t>("payload"));
    out.push_back(std::move(t));
  }
  return out;
}

std::vector<NamedTensor> checkpoint_tensors(const MatchModel& model, const Vocab& vocab) {
  std::vector<NamedTensor> out;
  for (const auto& f : kConfigFields) out.push_back(scalar(f.name, static_cast<double>(model.config.*f.member)));
  out.push_back(scalar("config.head_init_gain", model.config.head_init_gain));
  model.for_each([&](const std::string& name, const Matrix& m) { out.push_back(matrix_tensor("param." + name, m)); });
  const auto& toks = vocab.tokens();
  for (std::size_t i = 2; i < toks.size(); ++i) out.push_back(scalar(kVocabPrefix + toks[i], static_cast<double>(i)));
  if (model.mkl_head) {
    const auto& h = *model.mkl_head;
    out.push_back(vector_tensor("mkl.weights", h.weights.values()));
    out.push_back(scalar("mkl.bias", h.solution.bias));
    out.push_back(scalar("mkl.dual_objective", h.solution.dual_objective));
    out.push_back(scalar("mkl.kkt_violation", h.solution.kkt_violation));
    out.push_back(scalar("mkl.outer_iterations", static_cast<double>(h.outer_iterations)));
    out.push_back(scalar("mkl.converged", h.converged ? 1.0 : 0.0));
    for (std::size_t j = 0; j < h.kernel_bank.size(); ++j) {
      const auto& k = h.kernel_bank[j];
      const double spec[4] = {static_cast<double>(k.kind), k.gamma, static_cast<double>(k.degree), k.coef0};
      out.push_back(vector_tensor("mkl.kernel." + std::to_string(j), spec));
    }
    Matrix sx(h.support_xs.size(), h.dimension());
    for (std::size_t i = 0; i < h.support_xs.size(); ++i) std::copy(h.support_xs[i].begin(), h.support_xs[i].end(), sx.row(i).begin());
    out.push_back(matrix_tensor("mkl.support_xs", sx));
    Vector ys(h.support_ys.begin(), h.support_ys.end());
    out.push_back(vector_tensor("mkl.support_ys", ys));
    out.push_back(vector_tensor("mkl.support_alpha", h.support_alpha));
  }
  return out;
}

Checkpoint checkpoint_from_tensors(std::span<const NamedTensor> tensors, std::string_view what) {
  std::map<std::string, const NamedTensor*> by_name;
  for (const auto& t : tensors) {
    if (!by_name.emplace(t.name, &t).second) fail_at(what, "duplicate tensor " + t.name);
  }
  std::map<std::string, bool> used;
  const auto get = [&](const std::string& name) -> const NamedTensor& {
    auto it = by_name.find(name);
    if (it == by_name.end()) fail_at(what, "missing tensor " + name);
    used[name] = true;
    return *it->second;
  };
  const auto get_scalar = [&](const std::string& name) {
    const auto& t = get(name);
    if (!t.dims.empty() || t.values.size() != 1) fail_at(what, "tensor " + name + " is not a scalar");
    return t.values[0];
  };
  const auto get_count = [&](const std::string& name) {
    const double v = get_scalar(name);
    if (!(v >= 0.0) || v != static_cast<double>(static_cast<std::size_t>(v))) fail_at(what, "tensor " + name + " is not a count");
    return static_cast<std::size_t>(v);
  };
  const auto get_vector = [&](const std::string& name) {
    const auto& t = get(name);
    if (t.dims.size() != 1) fail_at(what, "tensor " + name + " is not a vector");
    return t.values;
  };

  ModelConfig cfg;
  for (const auto& f : kConfigFields) cfg.*f.member = get_count(f.name);
  cfg.head_init_gain = get_scalar("config.head_init_gain");

  Checkpoint ck;
  try {
    ck.model = MatchModel::init(cfg, 0);
  } catch (const ConfigError& e) {
    fail_at(what, std::string("inconsistent model configuration (") + e.what() + ")");
  }
  ck.model.for_each([&](const std::string& name, Matrix& m) {
    const auto& t = get("param." + name);
    if (t.dims.size() != 2 || t.dims[0] != m.rows() || t.dims[1] != m.cols()) {
      fail_at(what, "tensor param." + name + " does not match expected shape " + m.shape_str());
    }
    std::copy(t.values.begin(), t.values.end(), m.values().begin());
  });

  std::vector<std::pair<std::size_t, std::string>> vocab_entries;
  for (const auto& t : tensors) {
    if (t.name.rfind(kVocabPrefix, 0) == 0) {
      used[t.name] = true;
      if (!t.dims.empty() || t.values.size() != 1) fail_at(what, "vocabulary entry " + t.name + " is not a scalar");
      vocab_entries.emplace_back(static_cast<std::size_t>(t.values[0]), t.name.substr(std::strlen(kVocabPrefix)));
    }
  }
  std::sort(vocab_entries.begin(), vocab_entries.end());
  std::vector<std::string> toks;
  for (std::size_t i = 0; i < vocab_entries.size(); ++i) {
    if (vocab_entries[i].first != i + 2) fail_at(what, "vocabulary ids are not dense");
    toks.push_back(vocab_entries[i].second);
  }
  ck.vocab = Vocab(std::move(toks));
  if (ck.vocab.size() != cfg.vocab_size) fail_at(what, "vocabulary size does not match config.vocab_size");

  if (by_name.count("mkl.weights")) {
    MklModel h;
    try {
      h.weights = KernelWeights(get_vector("mkl.weights"));
    } catch (const InvariantError& e) {
      fail_at(what, std::string("invalid MKL weights (") + e.what() + ")");
    }
    h.solution.bias = get_scalar("mkl.bias");
    h.solution.dual_objective = get_scalar("mkl.dual_objective");
    h.solution.kkt_violation = get_scalar("mkl.kkt_violation");
    h.outer_iterations = get_count("mkl.outer_iterations");
    h.converged = get_scalar("mkl.converged") != 0.0;
    for (std::size_t j = 0; j < h.weights.size(); ++j) {
      const auto v = get_vector("mkl.kernel." + std::to_string(j));
      if (v.size() != 4 || v[0] < 0 || v[0] > 3) fail_at(what, "malformed tensor mkl.kernel." + std::to_string(j));
      KernelSpec k{static_cast<KernelKind>(static_cast<int>(v[0])), v[1], static_cast<int>(v[2]), v[3]};
      h.kernel_bank.push_back(k);
    }
    const auto& sx = get("mkl.support_xs");
    if (sx.dims.size() != 2) fail_at(what, "tensor mkl.support_xs is not a matrix");
    const auto ys = get_vector("mkl.support_ys");
    h.support_alpha = get_vector("mkl.support_alpha");
    if (ys.size() != sx.dims[0] || h.support_alpha.size() != sx.dims[0]) fail_at(what, "MKL support tensors disagree in length");
    for (std::size_t i = 0; i < sx.dims[0]; ++i) {
      h.support_xs.emplace_back(sx.values.begin() + static_cast<long>(i * sx.dims[1]),
                                sx.values.begin() + static_cast<long>((i + 1) * sx.dims[1]));
      h.support_ys.push_back(static_cast<int>(ys[i]));
    }
    ck.model.mkl_head = std::move(h);
  }
  for (const auto& t : tensors) {
    if (!used.count(t.name)) fail_at(what, "unknown tensor " + t.name);
  }
  return ck;
}

std::string serialize_checkpoint(const MatchModel& model, const Vocab& vocab) {
  return encode_tensors(checkpoint_tensors(model, vocab));
}

Checkpoint deserialize_checkpoint(std::string_view bytes, std::string_view what) {
  return checkpoint_from_tensors(decode_tensors(bytes, what), what);
}

void save_checkpoint(const std::filesystem::path& path, const MatchModel& model, const Vocab& vocab) {
  write_file(path, serialize_checkpoint(model, vocab));
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  return deserialize_checkpoint(read_file(path), path.string());
}

}  // namespace visita
