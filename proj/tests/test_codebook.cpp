#include "cvep/codebook.hpp"

#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <set>

#include "cvep/error.hpp"
#include "cvep/rng.hpp"
#include "test_util.hpp"

using namespace cvep;

namespace {

std::vector<int> all_ones(int n) { return std::vector<int>(n, 1); }

BitSequence random_bipolar(int length, std::uint64_t seed) {
  Rng rng(seed);
  BitSequence s;
  s.bits.resize(length);
  for (int& b : s.bits) b = rng.uniform() < 0.5 ? -1 : 1;
  return s;
}

}  // namespace

TEST_CASE("m-sequence n=6 taps{6,1} has length 63 and 32/31 balance") {
  const BitSequence seq = generate_m_sequence(6, {6, 1}, all_ones(6));
  CHECK(seq.length() == 63);
  int pos = 0, neg = 0;
  for (int b : seq.bits) (b == 1 ? pos : neg)++;
  CHECK(pos == 32);
  CHECK(neg == 31);
}

TEST_CASE("m-sequence sliding window enumerates every nonzero state once") {
  // state-enumeration oracle: the cyclic n-bit windows of a maximal sequence
  // are exactly the 2^n - 1 nonzero register states
  const int n = 6;
  const BitSequence seq = generate_m_sequence(n, {6, 1}, all_ones(n));
  std::set<int> states;
  for (int i = 0; i < seq.length(); ++i) {
    int state = 0;
    for (int j = 0; j < n; ++j)
      state |= (seq.bits[(i + j) % seq.length()] == 1 ? 1 : 0) << j;
    states.insert(state);
  }
  CHECK(states.size() == 63);
  CHECK(states.count(0) == 0);
}

TEST_CASE("m-sequence n=2 visits the three nonzero states") {
  const BitSequence seq = generate_m_sequence(2, {2, 1}, {1, 1});
  CHECK(seq.length() == 3);
  std::set<std::pair<int, int>> states;
  for (int i = 0; i < 3; ++i)
    states.insert({seq.bits[i % 3], seq.bits[(i + 1) % 3]});
  CHECK(states.size() == 3);
}

TEST_CASE("m-sequence error paths") {
  CHECK_THROWS_WITH_AS(generate_m_sequence(6, {6, 1}, std::vector<int>(6, 0)),
                       doctest::Contains("AllZeroState"), Error);
  // x^4 + x^2 + 1 = (x^2 + x + 1)^2 is not primitive
  CHECK_THROWS_WITH_AS(generate_m_sequence(4, {4, 2}, all_ones(4)),
                       doctest::Contains("NonMaximalPeriod"), Error);
  CHECK_THROWS_WITH_AS(generate_m_sequence(6, {1}, all_ones(6)),
                       doctest::Contains("InvalidTaps"), Error);
}

TEST_CASE("golay base cases") {
  const auto [a0, b0] = generate_golay_pair(0);
  CHECK(a0.bits == std::vector<int>{1});
  CHECK(b0.bits == std::vector<int>{1});
  const auto [a1, b1] = generate_golay_pair(1);
  CHECK(a1.bits == std::vector<int>{1, 1});
  CHECK(b1.bits == std::vector<int>{1, -1});
}

TEST_CASE("golay pairs up to order 8 have delta complementary autocorrelation") {
  for (int m = 0; m <= 8; ++m) {
    const auto [a, b] = generate_golay_pair(m);
    const int l = a.length();
    REQUIRE(l == (1 << m));
    for (int k = 0; k < l; ++k) {
      const long sum = testutil::aperiodic_ac(a.bits, k) + testutil::aperiodic_ac(b.bits, k);
      if (k == 0)
        CHECK(sum == 2L * l);
      else
        CHECK(sum == 0);
    }
  }
}

TEST_CASE("circular shift basics") {
  BitSequence s;
  s.bits = {1, -1, -1};
  CHECK(circular_shift(s, 0).bits == s.bits);
  CHECK(circular_shift(s, 3).bits == s.bits);
  CHECK(circular_shift(s, 1).bits == std::vector<int>{-1, 1, -1});
  CHECK(circular_shift(s, -2).bits == circular_shift(s, 1).bits);
}

TEST_CASE("circular shift composes additively") {
  const BitSequence s = random_bipolar(16, 99);
  Rng rng(7);
  for (int trial = 0; trial < 20; ++trial) {
    const long a = static_cast<long>(rng.integer(40)) - 20;
    const long b = static_cast<long>(rng.integer(40)) - 20;
    CHECK(circular_shift(circular_shift(s, a), b).bits == circular_shift(s, a + b).bits);
  }
}

TEST_CASE("codebook shift allocation") {
  const BitSequence mseq = generate_m_sequence(6, {6, 1}, all_ones(6));
  const CodeBook book = build_codebook(mseq, 32, 1);
  for (int j = 0; j < 32; ++j) CHECK(book.shifts[j] == j);
  CHECK(book.shifts[0] == 0);

  const BitSequence golay = generate_golay_pair(6).first;
  const CodeBook gbook = build_codebook(golay, 16, 4);
  for (int j = 0; j < 16; ++j) CHECK(gbook.shifts[j] == 4 * j);

  const CodeBook single = build_codebook(mseq, 1, 5);
  CHECK(single.code_for(0).bits == mseq.bits);
}

TEST_CASE("codebook collision is rejected") {
  const BitSequence golay = generate_golay_pair(3).first;  // length 8
  CHECK_THROWS_WITH_AS(build_codebook(golay, 3, 4), doctest::Contains("ShiftCollision"),
                       Error);
}

TEST_CASE("codebook targets are pairwise distinct rotations of the base") {
  const BitSequence mseq = generate_m_sequence(5, {5, 2}, all_ones(5));
  const CodeBook book = build_codebook(mseq, 12, 2);
  std::set<std::vector<int>> seen;
  for (int j = 0; j < book.n_targets; ++j) {
    const BitSequence code = book.code_for(j);
    CHECK(seen.insert(code.bits).second);
    CHECK(circular_shift(code, -book.shifts[j]).bits == mseq.bits);
  }
}

TEST_CASE("periodic autocorrelation of the 63-bit m-sequence is two-valued") {
  const BitSequence seq = generate_m_sequence(6, {6, 1}, all_ones(6));
  const std::vector<long> r = periodic_autocorrelation(seq);
  CHECK(r[0] == 63);
  for (int k = 1; k < 63; ++k) CHECK(r[k] == -1);
}

TEST_CASE("m-sequence family identities across register lengths") {
  const std::vector<std::pair<int, std::vector<int>>> polys{
      {3, {3, 1}}, {4, {4, 1}}, {5, {5, 2}}, {6, {6, 1}}, {7, {7, 1}}};
  for (const auto& [n, taps] : polys) {
    const BitSequence seq = generate_m_sequence(n, taps, all_ones(n));
    const int l = (1 << n) - 1;
    REQUIRE(seq.length() == l);
    int pos = 0;
    for (int b : seq.bits) pos += b == 1;
    CHECK(std::abs(2 * pos - l) == 1);
    const std::vector<long> r = periodic_autocorrelation(seq);
    CHECK(r[0] == l);
    for (int k = 1; k < l; ++k) CHECK(r[k] == -1);
  }
}

TEST_CASE("periodic autocorrelation simple cases and shift invariance") {
  BitSequence ones;
  ones.bits.assign(10, 1);
  for (long v : periodic_autocorrelation(ones)) CHECK(v == 10);

  const BitSequence s = random_bipolar(16, 1234);
  const auto r0 = periodic_autocorrelation(s);
  // independent brute-force oracle for the definition itself
  for (int k = 0; k < 16; ++k) CHECK(r0[k] == testutil::periodic_ac(s.bits, k));
  for (long k : {1L, 5L, 15L}) {
    CHECK(periodic_autocorrelation(circular_shift(s, k)) == r0);
  }
}

TEST_CASE("codebook text round trip") {
  const BitSequence golay = generate_golay_pair(6).first;
  const CodeBook book = build_codebook(golay, 16, 4);
  const auto path = std::filesystem::temp_directory_path() / "cvep_test_codebook.txt";
  save_codebook(book, path);
  const CodeBook loaded = load_codebook(path);
  CHECK(loaded.base.bits == book.base.bits);
  CHECK(loaded.n_targets == book.n_targets);
  CHECK(loaded.shifts == book.shifts);
  CHECK(loaded.base.bit_rate_hz == book.base.bit_rate_hz);
  CHECK(loaded.base.family == CodeFamily::GolayA);
  std::filesystem::remove(path);
}

TEST_CASE("codebook file accepts 0/1 alphabet") {
  const auto path = std::filesystem::temp_directory_path() / "cvep_test_codebook01.txt";
  {
    std::ofstream out(path);
    out << "4 2 1 60 custom\n1 0 0 1\n";
  }
  const CodeBook book = load_codebook(path);
  CHECK(book.base.bits == std::vector<int>{1, -1, -1, 1});
  std::filesystem::remove(path);
}
