#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "json.hpp"
#include "macvqa/tape.hpp"

namespace macvqa {

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double clip_norm = 5.0;     // global L2 clip; <= 0 disables
  double warmup_ratio = 0.1;  // linear warmup over this fraction of total_steps
  std::uint64_t total_steps = 0;
};

/// Adam with global gradient-norm clipping and linear warmup to a constant rate.
class Adam {
 public:
  Adam() = default;
  explicit Adam(AdamConfig cfg) : cfg_(cfg) {}

  const AdamConfig& config() const { return cfg_; }
  AdamConfig& config() { return cfg_; }
  std::uint64_t steps() const { return t_; }

  double learning_rate_at(std::uint64_t step) const {
    const auto warm = static_cast<std::uint64_t>(std::ceil(cfg_.warmup_ratio * static_cast<double>(cfg_.total_steps)));
    if (warm == 0 || step >= warm) return cfg_.lr;
    return cfg_.lr * static_cast<double>(step + 1) / static_cast<double>(warm);
  }

  /// Returns the pre-clip gradient norm.
  double step(const std::vector<Parameter*>& params) {
    double sq = 0.0;
    for (const Parameter* p : params)
      for (double g : p->grad.values()) sq += g * g;
    const double gnorm = std::sqrt(sq);
    const double clip = (cfg_.clip_norm > 0.0 && gnorm > cfg_.clip_norm) ? cfg_.clip_norm / gnorm : 1.0;
    const double lr = learning_rate_at(t_);
    ++t_;
    const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
    for (Parameter* p : params) {
      auto& st = state_[p->name];
      if (st.m.size() != p->value.size()) {
        st.m.assign(p->value.size(), 0.0);
        st.v.assign(p->value.size(), 0.0);
      }
      auto& w = p->value.values();
      const auto& g = p->grad.values();
      for (std::size_t i = 0; i < w.size(); ++i) {
        const double gi = g[i] * clip;
        st.m[i] = cfg_.beta1 * st.m[i] + (1.0 - cfg_.beta1) * gi;
        st.v[i] = cfg_.beta2 * st.v[i] + (1.0 - cfg_.beta2) * gi * gi;
        w[i] -= lr * (st.m[i] / bc1) / (std::sqrt(st.v[i] / bc2) + cfg_.eps);
      }
    }
    return gnorm;
  }

  nlohmann::json to_json() const {
    nlohmann::json moments = nlohmann::json::object();
    for (const auto& [name, st] : state_) moments[name] = {{"m", st.m}, {"v", st.v}};
    return {{"lr", cfg_.lr},          {"beta1", cfg_.beta1},
            {"beta2", cfg_.beta2},    {"eps", cfg_.eps},
            {"clip_norm", cfg_.clip_norm}, {"warmup_ratio", cfg_.warmup_ratio},
            {"total_steps", cfg_.total_steps}, {"t", t_},
            {"moments", moments}};
  }

  static Adam from_json(const nlohmann::json& j) {
    Adam a;
    a.cfg_.lr = j.at("lr").get<double>();
    a.cfg_.beta1 = j.at("beta1").get<double>();
    a.cfg_.beta2 = j.at("beta2").get<double>();
    a.cfg_.eps = j.at("eps").get<double>();
    a.cfg_.clip_norm = j.at("clip_norm").get<double>();
    a.cfg_.warmup_ratio = j.at("warmup_ratio").get<double>();
    a.cfg_.total_steps = j.at("total_steps").get<std::uint64_t>();
    a.t_ = j.at("t").get<std::uint64_t>();
    for (const auto& [name, st] : j.at("moments").items())
      a.state_[name] = {st.at("m").get<std::vector<double>>(), st.at("v").get<std::vector<double>>()};
    return a;
  }

  friend bool operator==(const Adam& a, const Adam& b) {
    return a.t_ == b.t_ && a.to_json() == b.to_json();
  }

 private:
  struct Moments {
    std::vector<double> m, v;
  };
  AdamConfig cfg_;
  std::uint64_t t_ = 0;
  std::map<std::string, Moments> state_;
};

}  // namespace macvqa
