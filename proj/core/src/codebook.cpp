#include "cvep/codebook.hpp"

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>

#include "cvep/error.hpp"

namespace cvep {

std::string to_string(CodeFamily f) {
  switch (f) {
    case CodeFamily::MSequence: return "m-sequence";
    case CodeFamily::GolayA: return "golay-a";
    case CodeFamily::GolayB: return "golay-b";
    case CodeFamily::Custom: return "custom";
  }
  return "custom";
}

CodeFamily code_family_from_string(const std::string& s) {
  if (s == "m-sequence") return CodeFamily::MSequence;
  if (s == "golay-a") return CodeFamily::GolayA;
  if (s == "golay-b") return CodeFamily::GolayB;
  if (s == "custom") return CodeFamily::Custom;
  fail("FormatError", "unknown code family '" + s + "'");
}

BitSequence generate_m_sequence(int register_len, const std::vector<int>& taps,
                                const std::vector<int>& init_state,
                                double bit_rate_hz) {
  const int n = register_len;
  if (n < 2 || n > 24) fail("InvalidTaps", "register length must be in [2, 24]");
  if (static_cast<int>(init_state.size()) != n)
    fail("AllZeroState", "init_state must have exactly register_len bits");

  bool any_set = false;
  for (int b : init_state) {
    if (b != 0 && b != 1) fail("AllZeroState", "init_state bits must be 0 or 1");
    any_set = any_set || b == 1;
  }
  if (!any_set) fail("AllZeroState", "LFSR initial state must be nonzero");

  std::set<int> tap_set(taps.begin(), taps.end());
  if (tap_set.count(n) == 0)
    fail("InvalidTaps", "tap set must include the register length (polynomial degree)");
  for (int t : tap_set)
    if (t < 1 || t > n) fail("InvalidTaps", "tap exponents must lie in [1, register_len]");

  const long period_target = (1L << n) - 1;

  // Linear recurrence from the polynomial x^n + sum x^t + 1:
  // s[i] = s[i-n] XOR (XOR over taps t<n of s[i-n+t]).
  std::vector<int> s(init_state.begin(), init_state.end());
  s.reserve(static_cast<std::size_t>(period_target) + n);
  auto step = [&](std::size_t i) {
    int v = s[i - n];
    for (int t : tap_set)
      if (t < n) v ^= s[i - n + t];
    return v;
  };
  for (std::size_t i = n; i < static_cast<std::size_t>(period_target) + n; ++i)
    s.push_back(step(i));

  // Period check: the n-bit state must first recur after exactly 2^n - 1 steps.
  auto state_equal = [&](std::size_t off) {
    for (int j = 0; j < n; ++j)
      if (s[off + j] != s[j]) return false;
    return true;
  };
  long period = 0;
  for (long k = 1; k <= period_target; ++k) {
    if (state_equal(static_cast<std::size_t>(k))) {
      period = k;
      break;
    }
  }
  if (period != period_target)
    fail("NonMaximalPeriod", "LFSR cycle length " + std::to_string(period) +
                                 " != " + std::to_string(period_target) +
                                 " (taps are not a primitive polynomial)");

  BitSequence out;
  out.family = CodeFamily::MSequence;
  out.bit_rate_hz = bit_rate_hz;
  out.bits.resize(period_target);
  for (long i = 0; i < period_target; ++i) out.bits[i] = s[i] ? 1 : -1;
  return out;
}

std::pair<BitSequence, BitSequence> generate_golay_pair(int order, double bit_rate_hz) {
  if (order < 0 || order > 20) fail("InvalidTaps", "golay order must be in [0, 20]");
  std::vector<int> a{1}, b{1};
  for (int m = 0; m < order; ++m) {
    std::vector<int> na(a.size() * 2), nb(a.size() * 2);
    std::copy(a.begin(), a.end(), na.begin());
    std::copy(b.begin(), b.end(), na.begin() + a.size());
    std::copy(a.begin(), a.end(), nb.begin());
    std::transform(b.begin(), b.end(), nb.begin() + a.size(), [](int v) { return -v; });
    a = std::move(na);
    b = std::move(nb);
  }
  BitSequence sa, sb;
  sa.bits = std::move(a);
  sa.family = CodeFamily::GolayA;
  sa.bit_rate_hz = bit_rate_hz;
  sb.bits = std::move(b);
  sb.family = CodeFamily::GolayB;
  sb.bit_rate_hz = bit_rate_hz;
  return {std::move(sa), std::move(sb)};
}

BitSequence circular_shift(const BitSequence& seq, long k) {
  const long l = seq.length();
  BitSequence out = seq;
  if (l == 0) return out;
  long r = ((k % l) + l) % l;
  for (long i = 0; i < l; ++i) out.bits[i] = seq.bits[(i - r + l) % l];
  return out;
}

BitSequence CodeBook::code_for(int target) const {
  if (target < 0 || target >= n_targets)
    fail("LabelOutOfRange", "target " + std::to_string(target) + " not in codebook");
  return circular_shift(base, shifts[target]);
}

CodeBook build_codebook(const BitSequence& base, int n_targets, int shift_step) {
  if (n_targets < 1) fail("ShiftCollision", "codebook needs at least one target");
  const int l = base.length();
  if (l < 1) fail("ShiftCollision", "base sequence is empty");
  CodeBook book;
  book.base = base;
  book.n_targets = n_targets;
  book.shift_step = shift_step;
  book.shifts.resize(n_targets);
  std::set<int> seen;
  for (int j = 0; j < n_targets; ++j) {
    int s = static_cast<int>((static_cast<long>(j) * shift_step) % l);
    if (!seen.insert(s).second)
      fail("ShiftCollision", "targets collide at shift " + std::to_string(s));
    book.shifts[j] = s;
  }
  return book;
}

std::vector<long> periodic_autocorrelation(const BitSequence& seq) {
  const int l = seq.length();
  std::vector<long> r(l, 0);
  for (int k = 0; k < l; ++k) {
    long s = 0;
    for (int i = 0; i < l; ++i) s += static_cast<long>(seq.bits[i]) * seq.bits[(i + k) % l];
    r[k] = s;
  }
  return r;
}

void save_codebook(const CodeBook& book, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) fail("FormatError", "cannot open " + path.string() + " for writing");
  out << book.base.length() << ' ' << book.n_targets << ' ' << book.shift_step << ' '
      << book.base.bit_rate_hz << ' ' << to_string(book.base.family) << '\n';
  for (int i = 0; i < book.base.length(); ++i) {
    if (i) out << ' ';
    out << book.base.bits[i];
  }
  out << '\n';
}

CodeBook load_codebook(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail("FormatError", "cannot open codebook file " + path.string());
  std::string header;
  if (!std::getline(in, header)) fail("FormatError", "codebook file is empty");
  std::istringstream hs(header);
  long l;
  int n_targets, shift_step;
  double bit_rate;
  std::string family;
  if (!(hs >> l >> n_targets >> shift_step >> bit_rate >> family))
    fail("FormatError", "bad codebook header: '" + header + "'");

  BitSequence base;
  base.family = code_family_from_string(family);
  base.bit_rate_hz = bit_rate;
  base.bits.reserve(l);
  for (long i = 0; i < l; ++i) {
    int v;
    if (!(in >> v)) fail("FormatError", "codebook truncated at bit " + std::to_string(i));
    if (v == 0) v = -1;  // unipolar accepted at the file boundary
    if (v != 1 && v != -1)
      fail("FormatError", "codebook bit " + std::to_string(i) + " is not in {+1,-1,0,1}");
    base.bits.push_back(v);
  }
  return build_codebook(base, n_targets, shift_step);
}

}  // namespace cvep
