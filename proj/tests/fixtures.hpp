#pragma once

#include <cmath>
#include <random>
#include <vector>

#include "cusumrl/fqi.hpp"
#include "cusumrl/sieve.hpp"
#include "cusumrl/trajectory.hpp"
#include "oracles.hpp"

namespace fixture {

/// Three small MDPs with transition probabilities in quarters.
inline std::vector<oracle::TabularMdp> tabular_mdps() {
  std::vector<oracle::TabularMdp> out;
  {
    oracle::TabularMdp m;
    m.num_states = 2;
    m.discount = 0.9;
    m.p = {{{1.0, 0.0}, {0.0, 1.0}}, {{1.0, 0.0}, {0.25, 0.75}}};
    m.r = {{0.0, 1.0}, {2.0, -0.5}};
    out.push_back(m);
  }
  {
    oracle::TabularMdp m;
    m.num_states = 3;
    m.discount = 0.95;
    m.p = {{{0.5, 0.5, 0.0}, {0.0, 0.25, 0.75}},
           {{0.25, 0.25, 0.5}, {1.0, 0.0, 0.0}},
           {{0.0, 0.0, 1.0}, {0.5, 0.25, 0.25}}};
    m.r = {{1.0, 0.0}, {-1.0, 0.5}, {0.25, 2.0}};
    out.push_back(m);
  }
  {
    oracle::TabularMdp m;
    m.num_states = 4;
    m.discount = 0.9;
    m.p = {{{0.25, 0.25, 0.25, 0.25}, {0.0, 1.0, 0.0, 0.0}},
           {{0.0, 0.0, 0.5, 0.5}, {0.75, 0.0, 0.0, 0.25}},
           {{0.5, 0.0, 0.0, 0.5}, {0.0, 0.0, 1.0, 0.0}},
           {{0.0, 0.25, 0.75, 0.0}, {0.25, 0.25, 0.25, 0.25}}};
    m.r = {{0.0, 0.3}, {1.0, -0.2}, {-0.5, 0.8}, {1.5, 0.0}};
    out.push_back(m);
  }
  return out;
}

/// Every (s, a) enumerated with successors repeated in exact proportion
/// (four copies per unit of probability), under the indicator basis.
inline cusumrl::LinearDesign tabular_design(const oracle::TabularMdp& mdp) {
  const int S = mdp.num_states;
  std::vector<double> s, s_next, r;
  std::vector<int> a;
  for (int x = 0; x < S; ++x)
    for (int act = 0; act < 2; ++act)
      for (int y = 0; y < S; ++y) {
        const int copies = static_cast<int>(std::lround(mdp.p[x][act][y] * 4));
        for (int c = 0; c < copies; ++c) {
          s.push_back(x);
          s_next.push_back(y);
          a.push_back(act);
          r.push_back(mdp.r[x][act]);
        }
      }
  cusumrl::IndicatorBasis basis(S);
  cusumrl::StateMatrix xs = Eigen::Map<cusumrl::StateMatrix>(s.data(), static_cast<Eigen::Index>(s.size()), 1);
  cusumrl::StateMatrix ys = Eigen::Map<cusumrl::StateMatrix>(s_next.data(), static_cast<Eigen::Index>(s_next.size()), 1);
  cusumrl::LinearDesign d;
  d.num_actions = 2;
  d.phi = basis.evaluate(xs);
  d.phi_next = basis.evaluate(ys);
  d.actions = a;
  d.rewards = Eigen::Map<Eigen::VectorXd>(r.data(), static_cast<Eigen::Index>(r.size()));
  return d;
}

/// Small seeded dataset with a 1-d state and a reward that depends on (a, s).
inline cusumrl::Dataset tiny_dataset(int N, int T, unsigned seed, double shift = 0.0) {
  std::mt19937_64 g(seed);
  std::normal_distribution<double> n(0.0, 1.0);
  std::bernoulli_distribution coin(0.5);
  std::vector<double> states;
  std::vector<int> actions;
  std::vector<double> rewards;
  for (int i = 0; i < N; ++i) {
    double s = n(g);
    states.push_back(s);
    for (int t = 0; t < T; ++t) {
      const int a = coin(g) ? 1 : 0;
      const double sign = (shift != 0.0 && t >= T / 2) ? -1.0 : 1.0;
      rewards.push_back(sign * (a - 0.5) * s + 0.3 * n(g) + (t >= T / 2 ? shift : 0.0));
      actions.push_back(a);
      s = 0.5 * (2 * a - 1) * s + 0.7 * n(g);
      states.push_back(s);
    }
  }
  return cusumrl::Dataset(N, T, 1, 2, 0, states, actions, rewards);
}

}  // namespace fixture
