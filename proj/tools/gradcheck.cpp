#include "gradcheck.hpp"

#include <cmath>
#include <functional>
#include <iomanip>
#include <sstream>

#include "json.hpp"
#include "visita/attention.hpp"
#include "visita/encoders.hpp"
#include "visita/params.hpp"
#include "visita/rng.hpp"
#include "visita/training.hpp"

namespace visita::cli {

namespace {

Matrix random_normal(std::size_t r, std::size_t c, Rng& rng, double scale = 1.0) {
  Matrix m(r, c);
  for (double& v : m.values()) v = scale * rng.normal();
  return m;
}

double inner(const Matrix& a, const Matrix& b) { return dot(a.values(), b.values()); }

// FD gradient of `loss` with respect to *target, restoring it afterwards.
Matrix numeric_grad(const std::function<double()>& loss, Matrix& target, double h) {
  const Matrix saved = target;
  Matrix g = finite_diff_grad(
      [&](const Matrix& m) {
        target = m;
        return loss();
      },
      saved, h);
  target = saved;
  return g;
}

struct Tracker {
  GradcheckRow row;

  void record(const std::string& tensor, const Matrix& analytic, const Matrix& numeric) {
    const double e = relative_error(analytic, numeric);
    ++row.tensors;
    if (row.worst_tensor.empty() || e > row.max_rel_error) {
      row.max_rel_error = e;
      row.worst_tensor = tensor;
    }
  }
};

AttentionGrads corrupted_attention_backward(const AttentionInput& in, const Matrix& upstream) {
  Matrix scores = matmul_nt(in.q, in.k);
  const double scale = 1.0 / std::sqrt(static_cast<double>(in.q.cols()));
  scores *= scale;
  const Matrix w = softmax_rows(scores);
  AttentionGrads g;
  g.v = matmul_tn(w, upstream);
  Matrix ds = hadamard(w, matmul_nt(upstream, in.v));
  ds *= scale;
  g.q = matmul(ds, in.k);
  g.k = matmul_tn(ds, in.q);
  return g;
}

template <class P>
void randomize_layer_norms(P& params, Rng& rng) {
  params.for_each([&](const std::string& name, Matrix& m) {
    if (name.ends_with("_gain")) {
      for (double& v : m.values()) v = rng.uniform(0.5, 1.5);
    } else if (name.ends_with("_bias") || name == "conv_b" || name.ends_with(".conv_b")) {
      for (double& v : m.values()) v = 0.1 * rng.normal();
    }
  });
}

void check_attention(Tracker& t, Rng& rng, const GradcheckOptions& o) {
  const std::size_t nq = 1 + rng.below(5), n = 2 + rng.below(5), dk = 1 + rng.below(5), dv = 1 + rng.below(4);
  AttentionInput in{random_normal(nq, dk, rng), random_normal(n, dk, rng), random_normal(n, dv, rng)};
  const Matrix u = random_normal(nq, dv, rng);
  const AttentionGrads g = o.corrupt_backward ? corrupted_attention_backward(in, u) : attention_backward(in, u);
  auto loss = [&] { return inner(scaled_dot_attention(in).out, u); };
  t.record("q", g.q, numeric_grad(loss, in.q, o.h));
  t.record("k", g.k, numeric_grad(loss, in.k, o.h));
  t.record("v", g.v, numeric_grad(loss, in.v, o.h));
}

void check_multi_head(Tracker& t, Rng& rng, const GradcheckOptions& o) {
  const std::size_t heads = 1 + rng.below(3);
  const std::size_t d_model = heads * (1 + rng.below(3));
  const std::size_t n = 2 + rng.below(4);
  MultiHeadParams p = MultiHeadParams::init(d_model, heads, rng);
  Matrix x = random_normal(n, d_model, rng);
  const Matrix u = random_normal(n, d_model, rng);
  MultiHeadCache cache;
  multi_head_forward(x, p, cache);
  MultiHeadParams grads = zeros_like(p);
  const Matrix dx = multi_head_backward(cache, p, u, grads);
  auto loss = [&] { return inner(multi_head_attention(x, p), u); };
  t.record("x", dx, numeric_grad(loss, x, o.h));
  auto gs = list_tensors(grads);
  auto ps = list_tensors_mut(p);
  for (std::size_t i = 0; i < ps.size(); ++i) t.record(ps[i].first, *gs[i].second, numeric_grad(loss, *ps[i].second, o.h));
}

void check_block(Tracker& t, Rng& rng, const GradcheckOptions& o) {
  // Layer norm over two features maps every row to ±gain, which leaves the
  // query/key gradients at round-off level; keep at least three.
  const std::size_t heads = 1 + rng.below(2);
  const std::size_t d_model = heads * (3 + rng.below(2));
  const std::size_t d_ff = 2 + rng.below(6);
  const std::size_t n = 2 + rng.below(4);
  TransformerBlockParams p = TransformerBlockParams::init(d_model, heads, d_ff, rng);
  randomize_layer_norms(p, rng);
  Matrix x = random_normal(n, d_model, rng);
  const Matrix u = random_normal(n, d_model, rng);
  TransformerBlockCache cache;
  transformer_block_forward(x, p, cache);
  TransformerBlockParams grads = zeros_like(p);
  const Matrix dx = transformer_block_backward(cache, p, u, grads);
  auto loss = [&] { return inner(transformer_block(x, p), u); };
  t.record("x", dx, numeric_grad(loss, x, o.h));
  auto gs = list_tensors(grads);
  auto ps = list_tensors_mut(p);
  for (std::size_t i = 0; i < ps.size(); ++i) t.record(ps[i].first, *gs[i].second, numeric_grad(loss, *ps[i].second, o.h));
}

void check_end_to_end(Tracker& t, Rng& rng, const GradcheckOptions& o) {
  ModelConfig cfg;
  cfg.image_size = 8;
  cfg.patch_size = 4;
  cfg.conv_channels = 2;
  cfg.d_model = 8;
  cfg.d_embed = 4;
  cfg.heads = 2;
  cfg.blocks = 1;
  cfg.ffn_hidden = 8;
  cfg.caption_len = 4;
  cfg.vocab_size = 6;
  cfg.head_init_gain = 1.0;
  MatchModel model = MatchModel::init(cfg, rng.next_u64());
  randomize_layer_norms(model, rng);

  std::vector<ImageTensor> images(2, ImageTensor(cfg.image_size, cfg.image_size, cfg.channels));
  for (auto& im : images)
    for (double& v : im.data) v = rng.uniform();
  std::vector<std::vector<int>> texts(2, std::vector<int>(cfg.caption_len));
  for (auto& tx : texts) {
    for (int& id : tx) id = static_cast<int>(rng.below(cfg.vocab_size));
    tx[0] = 2 + static_cast<int>(rng.below(cfg.vocab_size - 2));
  }
  MicroBatch mb;
  for (auto& im : images) mb.images.push_back(&im);
  for (auto& tx : texts) mb.texts.push_back(&tx);
  std::vector<TrainingPair> pos{{0, 0, 1.0, 0}, {1, 1, 1.0, 1}};
  mb.pairs = sample_negatives(pos, rng, 1);

  MatchModel grads = zeros_like(model);
  batch_loss_and_grad(model, mb, grads);
  auto loss = [&] { return batch_loss(model, mb); };
  auto gs = list_tensors(grads);
  auto ps = list_tensors_mut(model);
  for (std::size_t i = 0; i < ps.size(); ++i) t.record(ps[i].first, *gs[i].second, numeric_grad(loss, *ps[i].second, o.h));
}

}  // namespace

bool GradcheckReport::pass() const {
  for (const auto& r : rows)
    if (!r.pass) return false;
  return !rows.empty();
}

std::string GradcheckReport::table() const {
  std::ostringstream ss;
  ss << std::left << std::setw(22) << "check" << std::setw(11) << "instances" << std::setw(16) << "max_rel_error"
     << std::setw(11) << "threshold" << std::setw(8) << "status"
     << "worst_tensor\n";
  for (const auto& r : rows) {
    std::ostringstream e, th;
    e << std::scientific << std::setprecision(3) << r.max_rel_error;
    th << std::scientific << std::setprecision(0) << r.threshold;
    ss << std::left << std::setw(22) << r.name << std::setw(11) << r.instances << std::setw(16) << e.str()
       << std::setw(11) << th.str() << std::setw(8) << (r.pass ? "pass" : "FAIL") << r.worst_tensor << "\n";
  }
  return ss.str();
}

std::string GradcheckReport::to_json(int indent) const {
  nlohmann::json checks = nlohmann::json::array();
  for (const auto& r : rows) {
    checks.push_back({{"name", r.name},
                      {"instances", r.instances},
                      {"tensors", r.tensors},
                      {"max_rel_error", r.max_rel_error},
                      {"threshold", r.threshold},
                      {"worst_tensor", r.worst_tensor},
                      {"pass", r.pass}});
  }
  nlohmann::json j;
  j["command"] = "gradcheck";
  j["checks"] = std::move(checks);
  j["pass"] = pass();
  return j.dump(indent);
}

GradcheckReport run_gradient_audit(const GradcheckOptions& options) {
  struct Check {
    const char* name;
    double threshold;
    void (*run)(Tracker&, Rng&, const GradcheckOptions&);
  };
  const Check checks[] = {
      {"scaled_dot_attention", 1e-4, check_attention},
      {"multi_head_attention", 1e-4, check_multi_head},
      {"transformer_block", 1e-4, check_block},
      {"end_to_end_microbatch", 1e-3, check_end_to_end},
  };
  GradcheckReport report;
  const Rng root(options.seed);
  for (std::size_t c = 0; c < std::size(checks); ++c) {
    Tracker t;
    t.row.name = checks[c].name;
    t.row.threshold = checks[c].threshold;
    for (std::size_t i = 0; i < options.instances; ++i) {
      Rng rng = root.derive(1000 * (c + 1) + i);
      checks[c].run(t, rng, options);
      ++t.row.instances;
    }
    t.row.pass = t.row.instances > 0 && t.row.max_rel_error <= t.row.threshold;
    report.rows.push_back(std::move(t.row));
  }
  return report;
}

}  // namespace visita::cli
