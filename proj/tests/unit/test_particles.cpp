#include "dcmeld/particle_io.hpp"
#include "dcmeld/particles.hpp"

#include <doctest.h>

#include <algorithm>
#include <filesystem>
#include <numeric>
#include <sstream>

using namespace dcmeld;

namespace {

WeightedParticleSystem column_system(std::vector<double> v) {
  RowMatrixXd m(static_cast<Index>(v.size()), 1);
  for (std::size_t i = 0; i < v.size(); ++i) m(static_cast<Index>(i), 0) = v[i];
  return WeightedParticleSystem::uniform(std::move(m), {"x"});
}

IndexMultiset one_based(std::vector<Index> v, Index src) { return IndexMultiset::from_one_based(v, src); }

std::vector<Index> random_permutation(Index n, RandomStream& rng) {
  std::vector<Index> p(static_cast<std::size_t>(n));
  std::iota(p.begin(), p.end(), Index{0});
  std::shuffle(p.begin(), p.end(), rng);
  return p;
}

}  // namespace

TEST_SUITE("particles") {
  TEST_CASE("effective sample size") {
    CHECK(ess(VectorXd::Zero(4)) == doctest::Approx(4.0));
    VectorXd lw(4);
    lw << 0.0, kNegInf, kNegInf, kNegInf;
    CHECK(ess(lw) == doctest::Approx(1.0));
    lw << std::log(0.5), std::log(0.5), kNegInf, kNegInf;
    CHECK(ess(lw) == doctest::Approx(2.0));
    VectorXd dead = VectorXd::Constant(3, kNegInf);
    CHECK_THROWS_AS(ess(dead), DegenerateSystemError);
  }

  TEST_CASE("resampling a point mass copies the surviving particle") {
    WeightedParticleSystem s = column_system({1.0, 2.0, 3.0});
    s.log_weights << 0.0, kNegInf, kNegInf;
    RandomStream rng(3);
    for (auto kind : {ResampleKind::multinomial, ResampleKind::systematic}) {
      auto [out, a] = resample(s, ResampleScheme{kind, 0.5}, rng);
      CHECK(a.one_based() == std::vector<Index>{1, 1, 1});
      for (Index i = 0; i < 3; ++i) CHECK(out.values(i, 0) == 1.0);
      CHECK(out.equally_weighted());
    }
  }

  TEST_CASE("systematic resampling of equal weights is a permutation") {
    RandomStream rng(11);
    for (Index n : {1, 2, 7, 64}) {
      auto a = resample_indices(VectorXd::Zero(n), n, ResampleKind::systematic, rng);
      std::vector<Index> v = a.indices();
      std::sort(v.begin(), v.end());
      std::vector<Index> id(static_cast<std::size_t>(n));
      std::iota(id.begin(), id.end(), Index{0});
      CHECK(v == id);
    }
  }

  TEST_CASE("multinomial frequencies follow the weights") {
    VectorXd lw(4);
    lw << std::log(0.7), std::log(0.1), std::log(0.1), std::log(0.1);
    RandomStream rng(5);
    int hits = 0;
    const int reps = 100000;
    for (int r = 0; r < reps; ++r) hits += resample_indices(lw, 1, ResampleKind::multinomial, rng)[0] == 0;
    CHECK(std::abs(hits / double(reps) - 0.7) < 0.01);
  }

  TEST_CASE("forward update composes index maps") {
    CHECK(forward_update(one_based({1, 2, 3}, 3), one_based({7, 8, 9}, 9)).one_based() == std::vector<Index>{7, 8, 9});
    CHECK(forward_update(one_based({2, 2, 3}, 3), one_based({7, 8, 9}, 9)).one_based() == std::vector<Index>{8, 8, 9});
    CHECK(forward_update(one_based({3, 1, 1}, 3), one_based({4, 5, 6}, 6)).one_based() == std::vector<Index>{6, 4, 4});
    CHECK_THROWS_AS(forward_update(one_based({1, 2}, 3), one_based({1, 2}, 2)), ShapeError);
  }

  TEST_CASE("back-left update with an identity root leaves the system alone") {
    WeightedParticleSystem s = column_system({10.0, 20.0});
    auto res = back_left_update({one_based({2, 1}, 2), IndexMultiset::identity(2)}, {s});
    CHECK(res.chain[0].one_based() == std::vector<Index>{2, 1});
    CHECK(res.systems[0].values == gather(s, one_based({2, 1}, 2)).values);
  }

  TEST_CASE("back-left update hand trace") {
    WeightedParticleSystem s = column_system({10.0, 20.0});
    auto res = back_left_update({one_based({2, 1}, 2), one_based({2, 2}, 2)}, {s});
    CHECK(res.chain[0].one_based() == std::vector<Index>{1, 1});
    CHECK(res.systems[0].values(0, 0) == 10.0);
    CHECK(res.systems[0].values(1, 0) == 10.0);
  }

  TEST_CASE("back-left update on a five-particle two-step chain") {
    // Root-end map A3 = (5,1,1,3,2), middle A2 = (2,3,4,5,1), leaf end A1 = (4,4,2,1,3).
    // Traced by hand: A2 o A3 = (1,2,2,4,3); A1 o (A2 o A3) = (4,4,4,1,2).
    auto res = back_left_update({one_based({4, 4, 2, 1, 3}, 5), one_based({2, 3, 4, 5, 1}, 5), one_based({5, 1, 1, 3, 2}, 5)},
                                {column_system({1, 2, 3, 4, 5}), column_system({6, 7, 8, 9, 10})});
    CHECK(res.chain[1].one_based() == std::vector<Index>{1, 2, 2, 4, 3});
    CHECK(res.chain[0].one_based() == std::vector<Index>{4, 4, 4, 1, 2});
    CHECK(res.systems[0].values.col(0).transpose() == (Eigen::RowVectorXd(5) << 4, 4, 4, 1, 2).finished());
    CHECK(res.systems[1].values.col(0).transpose() == (Eigen::RowVectorXd(5) << 6, 7, 7, 9, 8).finished());
  }

  TEST_CASE("back-right update on a five-particle two-step chain") {
    // Root end first: A1 = (5,1,1,3,2), A2 = (2,3,4,5,1), A3 = (4,4,2,1,3).
    auto res = back_right_update({one_based({5, 1, 1, 3, 2}, 5), one_based({2, 3, 4, 5, 1}, 5), one_based({4, 4, 2, 1, 3}, 5)},
                                 {column_system({6, 7, 8, 9, 10}), column_system({1, 2, 3, 4, 5})});
    CHECK(res.chain[1].one_based() == std::vector<Index>{1, 2, 2, 4, 3});
    CHECK(res.chain[2].one_based() == std::vector<Index>{4, 4, 4, 1, 2});
    CHECK(res.systems[0].values.col(0).transpose() == (Eigen::RowVectorXd(5) << 6, 7, 7, 9, 8).finished());
    CHECK(res.systems[1].values.col(0).transpose() == (Eigen::RowVectorXd(5) << 4, 4, 4, 1, 2).finished());
  }

  TEST_CASE("back-right on reversed inputs mirrors back-left") {
    RandomStream rng(21);
    const Index n = 6;
    for (int rep = 0; rep < 20; ++rep) {
      std::vector<IndexMultiset> chain;
      std::vector<WeightedParticleSystem> sys;
      for (int k = 0; k < 4; ++k) {
        std::vector<Index> a(static_cast<std::size_t>(n));
        for (auto& x : a) x = static_cast<Index>(rng.below(static_cast<std::uint64_t>(n)));
        chain.emplace_back(a, n);
      }
      for (int k = 0; k < 3; ++k) {
        std::vector<double> v(static_cast<std::size_t>(n));
        for (auto& x : v) x = rng.normal();
        sys.push_back(column_system(v));
      }
      auto left = back_left_update(chain, sys);
      auto rchain = chain;
      auto rsys = sys;
      std::reverse(rchain.begin(), rchain.end());
      std::reverse(rsys.begin(), rsys.end());
      auto right = back_right_update(rchain, rsys);
      std::reverse(right.chain.begin(), right.chain.end());
      std::reverse(right.systems.begin(), right.systems.end());
      CHECK(left.chain == right.chain);
      for (std::size_t k = 0; k < sys.size(); ++k) CHECK(left.systems[k].values == right.systems[k].values);
    }
  }

  TEST_CASE("back-left update matches stored trajectories") {
    RandomStream rng(8);
    const Index n = 5;
    for (int rep = 0; rep < 20; ++rep) {
      // Three generations: particles of generation g pick parents in g-1.
      std::vector<std::vector<Index>> parent(3);
      for (auto& p : parent) p = random_permutation(n, rng);
      std::vector<WeightedParticleSystem> gens;
      for (int g = 0; g < 2; ++g) {
        std::vector<double> v(static_cast<std::size_t>(n));
        for (auto& x : v) x = rng.normal();
        gens.push_back(column_system(v));
      }
      // Trajectory oracle: walk each final particle's lineage one step at a time.
      std::vector<std::vector<double>> expect(2, std::vector<double>(static_cast<std::size_t>(n)));
      for (Index i = 0; i < n; ++i) {
        Index at = parent[2][static_cast<std::size_t>(i)];
        expect[1][static_cast<std::size_t>(i)] = gens[1].values(at, 0);
        at = parent[1][static_cast<std::size_t>(at)];
        expect[0][static_cast<std::size_t>(i)] = gens[0].values(at, 0);
      }
      auto res = back_left_update({IndexMultiset(parent[1], n), IndexMultiset(parent[2], n), IndexMultiset::identity(n)}, gens);
      for (int g = 0; g < 2; ++g)
        for (Index i = 0; i < n; ++i) CHECK(res.systems[static_cast<std::size_t>(g)].values(i, 0) == expect[static_cast<std::size_t>(g)][static_cast<std::size_t>(i)]);
    }
  }

  TEST_CASE("resampled counts are unbiased") {
    VectorXd lw(5);
    lw << std::log(0.05), std::log(0.4), std::log(0.15), std::log(0.3), std::log(0.1);
    const VectorXd w = normalized_weights(lw);
    const Index n = 7;
    const int reps = 10000;
    for (ResampleKind kind : {ResampleKind::multinomial, ResampleKind::systematic}) {
      RandomStream rng(kind == ResampleKind::systematic ? 91 : 92);
      Eigen::ArrayXd sum = Eigen::ArrayXd::Zero(5), sq = Eigen::ArrayXd::Zero(5);
      for (int r = 0; r < reps; ++r) {
        Eigen::ArrayXd c = Eigen::ArrayXd::Zero(5);
        const auto idx = resample_indices(lw, n, kind, rng);
        for (Index i = 0; i < n; ++i) c[idx[i]] += 1.0;
        sum += c;
        sq += c * c;
      }
      for (Index j = 0; j < 5; ++j) {
        const double mean = sum[j] / reps;
        const double var = sq[j] / reps - mean * mean;
        const double se = std::sqrt(std::max(var, 1e-12) / reps);
        INFO("kind " << int(kind) << " particle " << j);
        CHECK(std::abs(mean - n * w[j]) <= 4.0 * se + 1e-12);
      }
    }
  }

  TEST_CASE("forward update has the identity as a unit and is associative") {
    RandomStream rng(17);
    auto random_multiset = [&](Index size, Index src) {
      std::vector<Index> v(static_cast<std::size_t>(size));
      for (auto& x : v) x = static_cast<Index>(rng.below(static_cast<std::uint64_t>(src)));
      return IndexMultiset(std::move(v), src);
    };
    for (int trial = 0; trial < 50; ++trial) {
      const Index n = 1 + static_cast<Index>(rng.below(12));
      const auto a = random_multiset(n, n), b = random_multiset(n, n), c = random_multiset(n, n);
      CHECK(forward_update(IndexMultiset::identity(n), a) == a);
      CHECK(forward_update(a, IndexMultiset::identity(n)) == a);
      CHECK(forward_update(forward_update(a, b), c) == forward_update(a, forward_update(b, c)));
    }
  }

  TEST_CASE("resampled systems are the input gathered by the returned indices") {
    RandomStream draws(23);
    RowMatrixXd v(40, 2);
    VectorXd lw(40);
    for (Index i = 0; i < 40; ++i) {
      v(i, 0) = draws.normal();
      v(i, 1) = static_cast<double>(i);
      lw[i] = draws.normal(0.0, 2.0);
    }
    const WeightedParticleSystem s(v, lw, {"x", "id"});
    for (ResampleKind kind : {ResampleKind::multinomial, ResampleKind::systematic}) {
      RandomStream rng(24);
      const auto [out, idx] = resample(s, ResampleScheme{kind, 1.0}, rng);
      CHECK(out.values == gather_rows(s.values, idx));
      CHECK(out.equally_weighted());
    }
  }

  TEST_CASE("effective sample size ignores a common shift") {
    RandomStream rng(29);
    VectorXd lw(25);
    for (Index i = 0; i < lw.size(); ++i) lw[i] = rng.normal(0.0, 1.5);
    const double base = ess(lw);
    for (double c : {-700.0, -3.0, 12.5, 650.0}) CHECK(ess((lw.array() + c).matrix()) == doctest::Approx(base).epsilon(1e-12));
  }

  TEST_CASE("system validation") {
    WeightedParticleSystem s = column_system({1.0, 2.0});
    s.log_weights << kNegInf, kNegInf;
    CHECK_THROWS_AS(s.validate(), DegenerateSystemError);
    CHECK_THROWS_AS(WeightedParticleSystem(RowMatrixXd::Zero(2, 2), VectorXd::Zero(3), {"a", "b"}), ShapeError);
  }
}

TEST_SUITE("particle_io") {
  TEST_CASE("csv and binary round trips are exact") {
    RandomStream rng(2);
    RowMatrixXd v(7, 3);
    for (Index i = 0; i < v.size(); ++i) v.data()[i] = rng.normal() * 1e3;
    VectorXd lw(7);
    for (Index i = 0; i < 7; ++i) lw[i] = rng.normal();
    lw[3] = kNegInf;
    WeightedParticleSystem s(v, lw, {"a", "b", "c"});
    std::stringstream ss;
    write_csv(ss, s);
    WeightedParticleSystem back = read_csv(ss);
    CHECK(back.values == s.values);
    CHECK(back.log_weights == s.log_weights);
    CHECK(back.labels == s.labels);

    const auto dir = std::filesystem::temp_directory_path() / "dcmeld_io_test";
    std::filesystem::create_directories(dir);
    write_binary(dir / "s.bin", s);
    WeightedParticleSystem b = read_binary(dir / "s.bin");
    CHECK(b.values == s.values);
    CHECK(b.log_weights == s.log_weights);
    IndexMultiset idx = IndexMultiset::from_one_based({3, 1, 1, 2}, 3);
    write_indices(dir / "i.txt", idx);
    CHECK(read_indices(dir / "i.txt") == idx);
    std::filesystem::remove_all(dir);
  }

  TEST_CASE("malformed csv is rejected") {
    std::stringstream ss("a,log_weight\n1.0\n");
    CHECK_THROWS(read_csv(ss));
  }
}
