#include "dcmeld/stage_plan.hpp"

#include "dcmeld/types.hpp"

#include <sstream>

namespace dcmeld {

std::string to_string(PlanCase c) {
  switch (c) {
    case PlanCase::odd_4divMplus1: return "odd_4divMplus1";
    case PlanCase::odd_4divMminus1: return "odd_4divMminus1";
    case PlanCase::even_4divM: return "even_4divM";
    case PlanCase::even_not4divM: return "even_not4divM";
  }
  return "?";
}

std::vector<int> Stage::submodels() const {
  std::vector<int> out;
  for (const auto& n : nodes) out.insert(out.end(), n.begin(), n.end());
  return out;
}

int StagePlan::stage_of(int m) const {
  for (const auto& s : stages)
    for (const auto& n : s.nodes)
      for (int k : n)
        if (k == m) return s.index;
  throw ShapeError("submodel " + std::to_string(m) + " is not in the plan");
}

std::string StagePlan::describe() const {
  std::ostringstream out;
  out << "M=" << M << " case=" << to_string(plan_case) << " S=" << S;
  for (const auto& s : stages) {
    out << " | s" << s.index << ":";
    for (const auto& n : s.nodes) {
      out << ' ';
      if (n.size() > 1) out << '(';
      for (std::size_t k = 0; k < n.size(); ++k) out << (k ? "," : "") << n[k];
      if (n.size() > 1) out << ')';
    }
  }
  return out.str();
}

int expected_stage_count(int M) {
  if (M < 3) throw ConfigError("a stage plan needs M >= 3");
  if (M % 2 == 1) return (M + 1) % 4 == 0 ? (M + 5) / 4 : (M + 7) / 4;
  return M % 4 == 0 ? (M + 4) / 4 : (M + 6) / 4;
}

StagePlan plan_stages(int M) {
  if (M < 3) throw ConfigError("a stage plan needs M >= 3, got " + std::to_string(M));
  StagePlan plan;
  plan.M = M;

  Stage first;
  first.index = 1;
  auto add_leaf = [&](int m) { first.nodes.push_back({m}); };
  int middle_last = 0;  // last s of the symmetric (m_L, m_R) stages

  if (M % 2 == 1) {
    for (int m = 1; m <= M; m += 2) add_leaf(m);
    if ((M + 1) % 4 == 0) {
      plan.plan_case = PlanCase::odd_4divMplus1;
      middle_last = (M + 1) / 4;
    } else {
      plan.plan_case = PlanCase::odd_4divMminus1;
      middle_last = (M - 1) / 4;
    }
  } else if (M % 4 == 0) {
    plan.plan_case = PlanCase::even_4divM;
    for (int m = 1; m <= M / 2 - 1; m += 2) add_leaf(m);
    for (int m = M / 2 + 2; m <= M; m += 2) add_leaf(m);
    middle_last = M / 4;
  } else {
    plan.plan_case = PlanCase::even_not4divM;
    for (int m = 1; m <= M / 2; m += 2) add_leaf(m);
    for (int m = M / 2 + 3; m <= M; m += 2) add_leaf(m);
    middle_last = (M - 2) / 4;
  }
  plan.stages.push_back(first);

  for (int s = 2; s <= middle_last; ++s) {
    Stage st;
    st.index = s;
    const int mL = 2 * s - 2;
    const int mR = M + 3 - 2 * s;
    st.nodes = {{mL}, {mR}};
    st.m_pair = std::make_pair(mL, mR);
    plan.stages.push_back(st);
  }

  auto push = [&](std::vector<int> node) {
    Stage st;
    st.index = static_cast<int>(plan.stages.size()) + 1;
    st.nodes = {std::move(node)};
    plan.stages.push_back(st);
  };
  switch (plan.plan_case) {
    case PlanCase::odd_4divMplus1: push({(M + 1) / 2}); break;
    case PlanCase::odd_4divMminus1:
      push({(M - 1) / 2});
      push({(M + 3) / 2});
      break;
    case PlanCase::even_4divM: push({M / 2, M / 2 + 1}); break;
    case PlanCase::even_not4divM:
      push({M / 2 - 1});
      push({M / 2 + 1, M / 2 + 2});
      break;
  }
  plan.S = static_cast<int>(plan.stages.size());
  return plan;
}

}  // namespace dcmeld
