#pragma once

#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace dcmeld {

enum class PlanCase { odd_4divMplus1, odd_4divMminus1, even_4divM, even_not4divM };

std::string to_string(PlanCase c);

/// One stage of the multi-stage sampler. Each entry of `nodes` is either a
/// single submodel or, for the even-M centre, two adjacent submodels that are
/// activated jointly. Later-stage nodes merge the component holding their
/// left neighbour with the component holding their right neighbour.
struct Stage {
  int index = 0;
  std::vector<std::vector<int>> nodes;
  std::optional<std::pair<int, int>> m_pair;  ///< (m_L, m_R) when the stage adds one on each side

  std::vector<int> submodels() const;
};

struct StagePlan {
  int M = 0;
  PlanCase plan_case = PlanCase::odd_4divMplus1;
  int S = 0;
  std::vector<Stage> stages;

  /// 1-based stage that activates submodel m.
  int stage_of(int m) const;
  std::string describe() const;
};

StagePlan plan_stages(int M);

/// Stage count in closed form for the case of M.
int expected_stage_count(int M);

}  // namespace dcmeld
