/*
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */
#pragma once

// Multi-leg dense network: one leg per flavour, legs concatenated into a body that
// ends in a single sigmoid unit, trained on squared error with Adam.
//
// Every random stream (initialisation, dropout) of a leg is keyed by the leg's name
// and the body sums leg contributions in name order, so reordering legs together
// with their inputs reproduces the same network bit for bit.

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <numeric>

#include "json.hpp"
#include "tensorrad/ml/dataset.hpp"
#include "tensorrad/ml/metrics.hpp"
#include "tensorrad/ml/models.hpp"

namespace tensorrad::trnet {

constexpr double kSeluLambda = 1.05070098;
constexpr double kSeluAlpha = 1.67326324;

inline double selu(double x) { return x > 0.0 ? kSeluLambda * x : kSeluLambda * kSeluAlpha * (std::exp(x) - 1.0); }
inline double selu_grad(double x) { return x > 0.0 ? kSeluLambda : kSeluLambda * kSeluAlpha * std::exp(x); }

using tensorrad::name_hash;

struct LegConfig {
  std::string name;
  std::vector<std::size_t> sizes;  // hidden widths; empty passes the flavour block straight to the body
};

struct TrNetConfig {
  std::vector<LegConfig> legs;
  std::vector<std::size_t> body{8, 1};  // last entry is the output unit
  double dropout = 0.0;
  double learning_rate = 1e-2;
  std::size_t epochs = 200;
  std::size_t batch_size = 16;
  std::uint64_t seed = 0;

  void validate() const {
    if (legs.empty()) throw Error("trnet: at least one leg is required");
    if (body.empty() || body.back() != 1) throw Error("trnet: final body layer must have width 1");
    for (auto w : body)
      if (w == 0) throw Error("trnet: body widths must be positive");
    std::vector<std::string> names;
    for (const auto& l : legs) {
      for (auto w : l.sizes)
        if (w == 0) throw Error("trnet: leg widths must be positive");
      names.push_back(l.name);
    }
    std::sort(names.begin(), names.end());
    if (std::adjacent_find(names.begin(), names.end()) != names.end()) throw Error("trnet: leg names must be unique");
    if (!(dropout >= 0.0 && dropout < 1.0)) throw Error("trnet: dropout must be in [0, 1)");
    if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate)) throw Error("trnet: invalid learning rate");
    if (batch_size == 0) throw Error("trnet: batch size must be positive");
  }
};

inline nlohmann::json config_to_json(const TrNetConfig& c) {
  nlohmann::json j;
  j["legs"] = nlohmann::json::array();
  for (const auto& l : c.legs) j["legs"].push_back({{"name", l.name}, {"sizes", l.sizes}});
  j["body"] = c.body;
  j["dropout"] = c.dropout;
  j["learning_rate"] = c.learning_rate;
  j["epochs"] = c.epochs;
  j["batch_size"] = c.batch_size;
  j["seed"] = c.seed;
  return j;
}

inline TrNetConfig config_from_json(const nlohmann::json& j) {
  TrNetConfig c;
  for (const auto& l : j.at("legs")) c.legs.push_back({l.at("name").get<std::string>(), l.at("sizes").get<std::vector<std::size_t>>()});
  c.body = j.at("body").get<std::vector<std::size_t>>();
  c.dropout = j.value("dropout", 0.0);
  c.learning_rate = j.value("learning_rate", 1e-2);
  c.epochs = j.value("epochs", std::size_t{200});
  c.batch_size = j.value("batch_size", std::size_t{16});
  c.seed = j.value("seed", std::uint64_t{0});
  c.validate();
  return c;
}

struct Dense {
  Eigen::MatrixXd W;  // out x in
  Eigen::VectorXd b;
};

/// Per-flavour input blocks, one matrix (cases x leg width) per leg.
using Blocks = std::vector<Eigen::MatrixXd>;

class TrNet {
 public:
  TrNet() = default;

  /// Lecun-normal weights, zero biases.
  TrNet(TrNetConfig cfg, std::span<const std::size_t> input_widths) : cfg_(std::move(cfg)) {
    cfg_.validate();
    if (input_widths.size() != cfg_.legs.size()) throw Error("trnet: one input width per leg is required");
    inputs_.assign(input_widths.begin(), input_widths.end());
    order_.resize(cfg_.legs.size());
    std::iota(order_.begin(), order_.end(), std::size_t{0});
    std::sort(order_.begin(), order_.end(), [&](std::size_t a, std::size_t b) { return cfg_.legs[a].name < cfg_.legs[b].name; });
    for (std::size_t l = 0; l < cfg_.legs.size(); ++l) {
      std::mt19937_64 rng(ml::mix_seed(cfg_.seed, name_hash("leg:" + cfg_.legs[l].name)));
      std::vector<Dense> layers;
      std::size_t in = inputs_[l];
      for (auto w : cfg_.legs[l].sizes) {
        layers.push_back(init_dense(w, in, in, rng));
        in = w;
      }
      legs_.push_back(std::move(layers));
      leg_out_.push_back(in);
    }
    const std::size_t concat = std::accumulate(leg_out_.begin(), leg_out_.end(), std::size_t{0});
    if (concat == 0) throw Error("trnet: legs produce no features");
    // First body layer, split into one column block per leg.
    for (std::size_t l = 0; l < cfg_.legs.size(); ++l) {
      std::mt19937_64 rng(ml::mix_seed(cfg_.seed, name_hash("join:" + cfg_.legs[l].name)));
      join_.push_back(init_dense(cfg_.body[0], leg_out_[l], concat, rng).W);
    }
    join_bias_ = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(cfg_.body[0]));
    std::mt19937_64 rng(ml::mix_seed(cfg_.seed, name_hash("body")));
    for (std::size_t i = 1; i < cfg_.body.size(); ++i) body_.push_back(init_dense(cfg_.body[i], cfg_.body[i - 1], cfg_.body[i - 1], rng));
  }

  const TrNetConfig& config() const { return cfg_; }
  std::vector<double>& history() { return history_; }
  const std::vector<double>& history() const { return history_; }

  /// Visits every parameter together with its gradient slot.
  template <class F>
  void for_each_param(TrNet& grad, F&& f) {
    auto visit = [&](Eigen::MatrixXd& p, Eigen::MatrixXd& g) {
      for (Eigen::Index i = 0; i < p.size(); ++i) f(p.data()[i], g.data()[i]);
    };
    auto visitv = [&](Eigen::VectorXd& p, Eigen::VectorXd& g) {
      for (Eigen::Index i = 0; i < p.size(); ++i) f(p.data()[i], g.data()[i]);
    };
    for (std::size_t l = 0; l < legs_.size(); ++l)
      for (std::size_t k = 0; k < legs_[l].size(); ++k) {
        visit(legs_[l][k].W, grad.legs_[l][k].W);
        visitv(legs_[l][k].b, grad.legs_[l][k].b);
      }
    for (std::size_t l = 0; l < join_.size(); ++l) visit(join_[l], grad.join_[l]);
    visitv(join_bias_, grad.join_bias_);
    for (std::size_t k = 0; k < body_.size(); ++k) {
      visit(body_[k].W, grad.body_[k].W);
      visitv(body_[k].b, grad.body_[k].b);
    }
  }

  std::size_t parameter_count() const {
    std::size_t n = static_cast<std::size_t>(join_bias_.size());
    for (const auto& leg : legs_)
      for (const auto& d : leg) n += static_cast<std::size_t>(d.W.size() + d.b.size());
    for (const auto& j : join_) n += static_cast<std::size_t>(j.size());
    for (const auto& d : body_) n += static_cast<std::size_t>(d.W.size() + d.b.size());
    return n;
  }

  bool all_finite() const {
    bool ok = join_bias_.allFinite();
    for (const auto& leg : legs_)
      for (const auto& d : leg) ok = ok && d.W.allFinite() && d.b.allFinite();
    for (const auto& j : join_) ok = ok && j.allFinite();
    for (const auto& d : body_) ok = ok && d.W.allFinite() && d.b.allFinite();
    return ok;
  }

  /// A zero-valued copy with the same shapes (used as a gradient container).
  TrNet zeros_like() const {
    TrNet z = *this;
    for (auto& leg : z.legs_)
      for (auto& d : leg) {
        d.W.setZero();
        d.b.setZero();
      }
    for (auto& j : z.join_) j.setZero();
    z.join_bias_.setZero();
    for (auto& d : z.body_) {
      d.W.setZero();
      d.b.setZero();
    }
    return z;
  }

  /// Eval-mode probability per case (no dropout).
  std::vector<double> forward(const Blocks& x) const {
    Cache c;
    run(x, nullptr, c);
    const auto& p = c.output;
    return {p.data(), p.data() + p.size()};
  }

  /// Mean squared error of the eval-mode output.
  double loss(const Blocks& x, std::span<const int> y) const {
    const auto p = forward(x);
    double s = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) s += (p[i] - y[i]) * (p[i] - y[i]);
    return s / static_cast<double>(p.size());
  }

  /// Loss and gradient of the mean squared error; `dropout` streams enable train mode.
  double loss_and_gradient(const Blocks& x, std::span<const int> y, TrNet& grad,
                           std::vector<std::mt19937_64>* dropout = nullptr) const {
    Cache c;
    run(x, dropout, c);
    const auto n = static_cast<double>(c.output.size());
    Eigen::VectorXd yv(c.output.size());
    for (Eigen::Index i = 0; i < yv.size(); ++i) yv(i) = y[static_cast<std::size_t>(i)];
    const Eigen::VectorXd r = c.output - yv;
    const double L = r.squaredNorm() / n;
    // d loss / d z_out
    Eigen::MatrixXd delta = (2.0 / n * r.array() * c.output.array() * (1.0 - c.output.array())).matrix();
    // body layers, last to first
    for (std::size_t k = body_.size(); k-- > 0;) {
      const Eigen::MatrixXd& a_in = c.body_act[k];  // input activations of body_[k]
      grad.body_[k].W = delta.transpose() * a_in;
      grad.body_[k].b = delta.colwise().sum().transpose();
      Eigen::MatrixXd da = delta * body_[k].W;
      delta = backprop_activation(da, c.body_pre[k], c.body_mask[k]);
    }
    // delta is now d loss / d z of the first body layer
    grad.join_bias_ = delta.colwise().sum().transpose();
    for (std::size_t l = 0; l < legs_.size(); ++l) {
      grad.join_[l] = delta.transpose() * c.leg_act[l].back();
      Eigen::MatrixXd d = delta * join_[l];
      for (std::size_t k = legs_[l].size(); k-- > 0;) {
        d = backprop_activation(d, c.leg_pre[l][k], c.leg_mask[l][k]);
        grad.legs_[l][k].W = d.transpose() * c.leg_act[l][k];
        grad.legs_[l][k].b = d.colwise().sum().transpose();
        if (k > 0) d = d * legs_[l][k].W;
      }
    }
    return L;
  }

  /// Dropout streams for training, keyed by leg name (legs) and "body".
  std::vector<std::mt19937_64> dropout_streams(std::uint64_t seed) const {
    std::vector<std::mt19937_64> s;
    for (const auto& l : cfg_.legs) s.emplace_back(ml::mix_seed(seed, name_hash("dropout:" + l.name)));
    s.emplace_back(ml::mix_seed(seed, name_hash("dropout:body")));
    return s;
  }

  nlohmann::json to_json() const {
    nlohmann::json j;
    j["config"] = config_to_json(cfg_);
    j["input_widths"] = inputs_;
    auto mat = [](const Eigen::MatrixXd& m) {
      std::vector<double> v;
      for (Eigen::Index r = 0; r < m.rows(); ++r)
        for (Eigen::Index c = 0; c < m.cols(); ++c) v.push_back(m(r, c));
      return nlohmann::json{{"rows", m.rows()}, {"cols", m.cols()}, {"values", v}};
    };
    auto vec = [](const Eigen::VectorXd& v) { return std::vector<double>(v.data(), v.data() + v.size()); };
    j["layers"] = nlohmann::json::array();
    for (std::size_t l = 0; l < legs_.size(); ++l)
      for (std::size_t k = 0; k < legs_[l].size(); ++k)
        j["layers"].push_back({{"name", "leg:" + cfg_.legs[l].name + ":" + std::to_string(k)},
                               {"weights", mat(legs_[l][k].W)},
                               {"bias", vec(legs_[l][k].b)}});
    for (std::size_t l = 0; l < join_.size(); ++l)
      j["layers"].push_back({{"name", "join:" + cfg_.legs[l].name}, {"weights", mat(join_[l])}});
    j["layers"].push_back({{"name", "join:bias"}, {"bias", vec(join_bias_)}});
    for (std::size_t k = 0; k < body_.size(); ++k)
      j["layers"].push_back({{"name", "body:" + std::to_string(k + 1)}, {"weights", mat(body_[k].W)}, {"bias", vec(body_[k].b)}});
    j["history"] = history_;
    return j;
  }

  static TrNet from_json(const nlohmann::json& j) {
    const auto widths = j.at("input_widths").get<std::vector<std::size_t>>();
    TrNet net(config_from_json(j.at("config")), widths);
    std::map<std::string, const nlohmann::json*> by_name;
    for (const auto& l : j.at("layers")) by_name[l.at("name").get<std::string>()] = &l;
    auto load_mat = [](const nlohmann::json& m, Eigen::MatrixXd& out) {
      if (m.at("rows").get<Eigen::Index>() != out.rows() || m.at("cols").get<Eigen::Index>() != out.cols())
        throw Error("trnet checkpoint: weight shape mismatch");
      const auto v = m.at("values").get<std::vector<double>>();
      if (v.size() != static_cast<std::size_t>(out.size())) throw Error("trnet checkpoint: weight count mismatch");
      for (Eigen::Index r = 0, i = 0; r < out.rows(); ++r)
        for (Eigen::Index c = 0; c < out.cols(); ++c) out(r, c) = v[static_cast<std::size_t>(i++)];
    };
    auto load_vec = [](const nlohmann::json& b, Eigen::VectorXd& out) {
      const auto v = b.get<std::vector<double>>();
      if (v.size() != static_cast<std::size_t>(out.size())) throw Error("trnet checkpoint: bias shape mismatch");
      for (std::size_t i = 0; i < v.size(); ++i) out(static_cast<Eigen::Index>(i)) = v[i];
    };
    auto find = [&](const std::string& n) -> const nlohmann::json& {
      auto it = by_name.find(n);
      if (it == by_name.end()) throw Error("trnet checkpoint: missing layer '" + n + "'");
      return *it->second;
    };
    for (std::size_t l = 0; l < net.legs_.size(); ++l)
      for (std::size_t k = 0; k < net.legs_[l].size(); ++k) {
        const auto& e = find("leg:" + net.cfg_.legs[l].name + ":" + std::to_string(k));
        load_mat(e.at("weights"), net.legs_[l][k].W);
        load_vec(e.at("bias"), net.legs_[l][k].b);
      }
    for (std::size_t l = 0; l < net.join_.size(); ++l) load_mat(find("join:" + net.cfg_.legs[l].name).at("weights"), net.join_[l]);
    load_vec(find("join:bias").at("bias"), net.join_bias_);
    for (std::size_t k = 0; k < net.body_.size(); ++k) {
      const auto& e = find("body:" + std::to_string(k + 1));
      load_mat(e.at("weights"), net.body_[k].W);
      load_vec(e.at("bias"), net.body_[k].b);
    }
    net.history_ = j.value("history", std::vector<double>{});
    if (!net.all_finite()) throw Error("trnet checkpoint: non-finite parameter");
    return net;
  }

 private:
  struct Cache {
    std::vector<std::vector<Eigen::MatrixXd>> leg_act;  // per leg: input, then each layer's output
    std::vector<std::vector<Eigen::MatrixXd>> leg_pre;
    std::vector<std::vector<Eigen::MatrixXd>> leg_mask;
    std::vector<Eigen::MatrixXd> body_act;  // inputs of body_[k]
    std::vector<Eigen::MatrixXd> body_pre;  // pre-activations feeding body_[k]
    std::vector<Eigen::MatrixXd> body_mask;
    Eigen::VectorXd output;
  };

  static Dense init_dense(std::size_t out, std::size_t in, std::size_t fan_in, std::mt19937_64& rng) {
    Dense d;
    d.W.resize(static_cast<Eigen::Index>(out), static_cast<Eigen::Index>(in));
    const double sd = 1.0 / std::sqrt(static_cast<double>(std::max<std::size_t>(fan_in, 1)));
    for (Eigen::Index r = 0; r < d.W.rows(); ++r)
      for (Eigen::Index c = 0; c < d.W.cols(); ++c) d.W(r, c) = sd * tensorrad::normal01(rng);
    d.b = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(out));
    return d;
  }

  /// SELU then (optionally) inverted dropout; returns the activation and records the mask.
  Eigen::MatrixXd activate(const Eigen::MatrixXd& z, std::mt19937_64* rng, Eigen::MatrixXd& mask) const {
    Eigen::MatrixXd a = z.unaryExpr([](double v) { return selu(v); });
    if (rng && cfg_.dropout > 0.0) {
      mask.resize(z.rows(), z.cols());
      const double keep = 1.0 - cfg_.dropout;
      for (Eigen::Index c = 0; c < z.cols(); ++c)
        for (Eigen::Index r = 0; r < z.rows(); ++r) mask(r, c) = ml::uniform01(*rng) < keep ? 1.0 / keep : 0.0;
      a = a.cwiseProduct(mask);
    } else {
      mask.resize(0, 0);
    }
    return a;
  }

  static Eigen::MatrixXd backprop_activation(const Eigen::MatrixXd& da, const Eigen::MatrixXd& z, const Eigen::MatrixXd& mask) {
    Eigen::MatrixXd d = da.cwiseProduct(z.unaryExpr([](double v) { return selu_grad(v); }));
    if (mask.size()) d = d.cwiseProduct(mask);
    return d;
  }

  void run(const Blocks& x, std::vector<std::mt19937_64>* dropout, Cache& c) const {
    if (x.size() != legs_.size()) throw Error("trnet: expected " + std::to_string(legs_.size()) + " flavour blocks");
    const Eigen::Index n = x.empty() ? 0 : x[0].rows();
    for (std::size_t l = 0; l < x.size(); ++l) {
      if (static_cast<std::size_t>(x[l].cols()) != inputs_[l])
        throw Error("trnet: block " + std::to_string(l) + " has " + std::to_string(x[l].cols()) + " columns, leg expects " +
                    std::to_string(inputs_[l]));
      if (x[l].rows() != n) throw Error("trnet: blocks differ in case count");
    }
    c.leg_act.assign(legs_.size(), {});
    c.leg_pre.assign(legs_.size(), {});
    c.leg_mask.assign(legs_.size(), {});
    for (std::size_t l = 0; l < legs_.size(); ++l) {
      c.leg_act[l].push_back(x[l]);
      for (const auto& layer : legs_[l]) {
        Eigen::MatrixXd z = c.leg_act[l].back() * layer.W.transpose();
        z.rowwise() += layer.b.transpose();
        Eigen::MatrixXd mask;
        Eigen::MatrixXd a = activate(z, dropout ? &(*dropout)[l] : nullptr, mask);
        c.leg_pre[l].push_back(std::move(z));
        c.leg_mask[l].push_back(std::move(mask));
        c.leg_act[l].push_back(std::move(a));
      }
    }
    Eigen::MatrixXd z = Eigen::MatrixXd::Zero(n, join_bias_.size());
    for (std::size_t l : order_) z.noalias() += c.leg_act[l].back() * join_[l].transpose();
    z.rowwise() += join_bias_.transpose();
    c.body_act.clear();
    c.body_pre.clear();
    c.body_mask.clear();
    std::mt19937_64* body_rng = dropout ? &dropout->back() : nullptr;
    for (const auto& layer : body_) {
      Eigen::MatrixXd mask;
      Eigen::MatrixXd a = activate(z, body_rng, mask);
      c.body_pre.push_back(z);
      c.body_mask.push_back(std::move(mask));
      z = a * layer.W.transpose();
      z.rowwise() += layer.b.transpose();
      c.body_act.push_back(std::move(a));
    }
    c.output = z.col(0).unaryExpr([](double v) { return ml::sigmoid(v); });
  }

  TrNetConfig cfg_;
  std::vector<std::size_t> inputs_, leg_out_, order_;
  std::vector<std::vector<Dense>> legs_;
  std::vector<Eigen::MatrixXd> join_;
  Eigen::VectorXd join_bias_;
  std::vector<Dense> body_;
  std::vector<double> history_;
};

struct AdamState {
  std::vector<double> m, v;
  std::size_t t = 0;
};

/// Minibatch Adam (0.9 / 0.999 / 1e-8) on squared error; per-epoch eval-mode loss goes to history.
inline TrNet train(const TrNetConfig& cfg, const Blocks& x, std::span<const int> y) {
  if (x.empty()) throw Error("trnet: no flavour blocks");
  for (int v : y)
    if (v != 0 && v != 1) throw Error("trnet: labels must be binary");
  std::vector<std::size_t> widths;
  for (const auto& b : x) widths.push_back(static_cast<std::size_t>(b.cols()));
  TrNet net(cfg, widths);
  const std::size_t n = y.size();
  if (n == 0 || static_cast<std::size_t>(x[0].rows()) != n) throw Error("trnet: labels do not match blocks");
  TrNet grad = net.zeros_like();
  AdamState adam;
  adam.m.assign(net.parameter_count(), 0.0);
  adam.v.assign(net.parameter_count(), 0.0);
  std::mt19937_64 order_rng(ml::mix_seed(cfg.seed, name_hash("batches")));
  auto dropout = net.dropout_streams(cfg.seed);
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  constexpr double b1 = 0.9, b2 = 0.999, eps = 1e-8;
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    ml::shuffle(order, order_rng);
    for (std::size_t start = 0; start < n; start += cfg.batch_size) {
      const std::size_t end = std::min(n, start + cfg.batch_size);
      Blocks xb;
      for (const auto& b : x) {
        Eigen::MatrixXd m(static_cast<Eigen::Index>(end - start), b.cols());
        for (std::size_t i = start; i < end; ++i) m.row(static_cast<Eigen::Index>(i - start)) = b.row(static_cast<Eigen::Index>(order[i]));
        xb.push_back(std::move(m));
      }
      std::vector<int> yb;
      for (std::size_t i = start; i < end; ++i) yb.push_back(y[order[i]]);
      const double L = net.loss_and_gradient(xb, yb, grad, cfg.dropout > 0.0 ? &dropout : nullptr);
      if (!std::isfinite(L))
        throw Error("trnet: non-finite loss at epoch " + std::to_string(epoch) + ", batch starting at " + std::to_string(start));
      ++adam.t;
      const double c1 = 1.0 - std::pow(b1, static_cast<double>(adam.t));
      const double c2 = 1.0 - std::pow(b2, static_cast<double>(adam.t));
      std::size_t i = 0;
      net.for_each_param(grad, [&](double& p, double& g) {
        adam.m[i] = b1 * adam.m[i] + (1.0 - b1) * g;
        adam.v[i] = b2 * adam.v[i] + (1.0 - b2) * g * g;
        p -= cfg.learning_rate * (adam.m[i] / c1) / (std::sqrt(adam.v[i] / c2) + eps);
        ++i;
      });
    }
    const double L = net.loss(x, y);
    if (!std::isfinite(L) || !net.all_finite())
      throw Error("trnet: training diverged at epoch " + std::to_string(epoch) + " (loss " + format_double(L) + ")");
    net.history().push_back(L);
  }
  return net;
}

/// Max relative error between back-propagated and central-difference gradients
/// (h = 1e-5) over all parameters, or a seeded sample of `max_params` of them.
inline double gradient_check(const TrNet& model, const Blocks& x, std::span<const int> y, std::size_t max_params = 0,
                             std::uint64_t seed = 0, double h = 1e-5) {
  TrNet net = model;
  TrNet grad = net.zeros_like();
  net.loss_and_gradient(x, y, grad);
  std::vector<double*> params;
  std::vector<double> analytic;
  net.for_each_param(grad, [&](double& p, double& g) {
    params.push_back(&p);
    analytic.push_back(g);
  });
  std::vector<std::size_t> idx(params.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  if (max_params && max_params < idx.size()) {
    std::mt19937_64 rng(seed);
    ml::shuffle(idx, rng);
    idx.resize(max_params);
  }
  double worst = 0.0;
  for (std::size_t i : idx) {
    const double saved = *params[i];
    *params[i] = saved + h;
    const double up = net.loss(x, y);
    *params[i] = saved - h;
    const double down = net.loss(x, y);
    *params[i] = saved;
    const double numeric = (up - down) / (2.0 * h);
    const double denom = std::max({std::abs(analytic[i]), std::abs(numeric), 1e-8});
    worst = std::max(worst, std::abs(analytic[i] - numeric) / denom);
  }
  return worst;
}

// ---------------------------------------------------------------------------
// Hyperparameter search

struct SearchSpace {
  std::vector<std::vector<std::size_t>> leg_sizes{{8}, {16}, {8, 8}};
  std::vector<std::vector<std::size_t>> body_sizes{{8, 1}, {16, 1}, {8, 8, 1}};
  std::vector<double> dropout{0.0, 0.1};
  std::vector<double> learning_rate{1e-3, 1e-2};
  std::vector<std::size_t> epochs{100};
  std::vector<std::size_t> batch_size{16};

  std::size_t size() const {
    return leg_sizes.size() * body_sizes.size() * dropout.size() * learning_rate.size() * epochs.size() *
           batch_size.size();
  }
};

struct Trial {
  TrNetConfig config;
  double score = 0.0;  // inner-CV mean balanced accuracy
};

struct SearchReport {
  TrNetConfig best;
  std::vector<Trial> trials;
};

/// Per-column z-score fitted on the given rows of each block.
struct BlockScaler {
  std::vector<Eigen::VectorXd> mean, scale;

  static BlockScaler fit(const Blocks& x) {
    BlockScaler s;
    for (const auto& b : x) {
      Eigen::VectorXd m = b.colwise().mean().transpose();
      Eigen::VectorXd sd(b.cols());
      for (Eigen::Index j = 0; j < b.cols(); ++j) sd(j) = std::sqrt((b.col(j).array() - m(j)).square().mean());
      s.mean.push_back(std::move(m));
      s.scale.push_back(std::move(sd));
    }
    return s;
  }
  Blocks apply(const Blocks& x) const {
    Blocks out;
    for (std::size_t l = 0; l < x.size(); ++l) {
      Eigen::MatrixXd b(x[l].rows(), x[l].cols());
      for (Eigen::Index j = 0; j < b.cols(); ++j)
        b.col(j) = scale[l](j) > 0.0 ? Eigen::VectorXd((x[l].col(j).array() - mean[l](j)) / scale[l](j))
                                     : Eigen::VectorXd::Zero(b.rows());
      out.push_back(std::move(b));
    }
    return out;
  }
};

inline Blocks take_rows(const Blocks& x, std::span<const std::size_t> rows) {
  Blocks out;
  for (const auto& b : x) {
    Eigen::MatrixXd m(static_cast<Eigen::Index>(rows.size()), b.cols());
    for (std::size_t i = 0; i < rows.size(); ++i) m.row(static_cast<Eigen::Index>(i)) = b.row(static_cast<Eigen::Index>(rows[i]));
    out.push_back(std::move(m));
  }
  return out;
}

/// Scales on the training rows, trains, and returns test probabilities.
inline std::vector<double> fit_predict(const TrNetConfig& cfg, const Blocks& train_x, std::span<const int> train_y,
                                      const Blocks& test_x) {
  const auto scaler = BlockScaler::fit(train_x);
  const TrNet net = train(cfg, scaler.apply(train_x), train_y);
  return net.forward(scaler.apply(test_x));
}

/// Mean balanced accuracy of a config over the plan's folds.
inline double cv_score(const TrNetConfig& cfg, const Blocks& x, std::span<const int> y, const ml::FoldPlan& plan) {
  double total = 0.0;
  for (std::size_t f = 0; f < plan.k; ++f) {
    const auto tr = plan.train_rows(f), te = plan.test_rows(f);
    std::vector<int> ytr, yte;
    for (auto i : tr) ytr.push_back(y[i]);
    for (auto i : te) yte.push_back(y[i]);
    const auto p = fit_predict(cfg, take_rows(x, tr), ytr, take_rows(x, te));
    std::vector<int> pred;
    for (double v : p) pred.push_back(v > 0.5 ? 1 : 0);
    total += ml::balanced_accuracy(ml::confusion(yte, pred));
  }
  return total / static_cast<double>(plan.k);
}

/// Uniform random configurations from the space, scored on `plan`; ties keep the earliest trial.
inline SearchReport random_search(const SearchSpace& space, const std::vector<std::string>& leg_names, const Blocks& x,
                                  std::span<const int> y, const ml::FoldPlan& plan, std::size_t budget,
                                  std::uint64_t seed) {
  if (budget == 0) throw Error("random_search: budget must be >= 1");
  if (space.size() == 0) throw Error("random_search: empty search space");
  if (leg_names.size() != x.size()) throw Error("random_search: one leg name per flavour block is required");
  std::mt19937_64 rng(seed);
  auto pick = [&](const auto& v) { return v[ml::uniform_index(rng, v.size())]; };
  SearchReport rep;
  double best = -1.0;
  for (std::size_t t = 0; t < budget; ++t) {
    TrNetConfig cfg;
    const auto legs = pick(space.leg_sizes);
    for (const auto& name : leg_names) cfg.legs.push_back({name, legs});
    cfg.body = pick(space.body_sizes);
    cfg.dropout = pick(space.dropout);
    cfg.learning_rate = pick(space.learning_rate);
    cfg.epochs = pick(space.epochs);
    cfg.batch_size = pick(space.batch_size);
    cfg.seed = ml::mix_seed(seed, t);
    const double s = cv_score(cfg, x, y, plan);
    rep.trials.push_back({cfg, s});
    if (s > best) {
      best = s;
      rep.best = cfg;
    }
  }
  return rep;
}

}  // namespace tensorrad::trnet
