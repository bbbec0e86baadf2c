#pragma once

#include <filesystem>
#include <string>
#include <utility>
#include <vector>

namespace cvep {

enum class CodeFamily { MSequence, GolayA, GolayB, Custom };

std::string to_string(CodeFamily f);
CodeFamily code_family_from_string(const std::string& s);

/// A bipolar stimulus sequence. Every element is exactly +1 or -1.
struct BitSequence {
  std::vector<int> bits;
  CodeFamily family = CodeFamily::Custom;
  double bit_rate_hz = 60.0;

  int length() const { return static_cast<int>(bits.size()); }
  bool operator==(const BitSequence& o) const { return bits == o.bits; }
};

/// Generates a maximal-length sequence from a Fibonacci LFSR.
///
/// `taps` lists the exponents of the feedback polynomial with nonzero
/// coefficients, excluding the constant term; it must include
/// `register_len` itself (e.g. {6, 1} encodes x^6 + x + 1). The generated
/// cycle length is verified to be exactly 2^n - 1.
BitSequence generate_m_sequence(int register_len, const std::vector<int>& taps,
                                const std::vector<int>& init_state,
                                double bit_rate_hz = 60.0);

/// Complementary pair of length 2^m built by the doubling recursion
/// (a, b) -> (a||b, a||-b) from the base pair ([+1], [+1]).
std::pair<BitSequence, BitSequence> generate_golay_pair(int order,
                                                        double bit_rate_hz = 60.0);

/// Right rotation by k: out[i] = in[(i - k) mod L]. k may be negative.
BitSequence circular_shift(const BitSequence& seq, long k);

/// Stimulus codes for a target grid: target j carries the base sequence
/// rotated by j * shift_step (mod L).
struct CodeBook {
  BitSequence base;
  int n_targets = 0;
  int shift_step = 0;
  std::vector<int> shifts;

  BitSequence code_for(int target) const;
};

CodeBook build_codebook(const BitSequence& base, int n_targets, int shift_step);

/// R(k) = sum_i seq[i] * seq[(i+k) mod L] for k = 0..L-1.
std::vector<long> periodic_autocorrelation(const BitSequence& seq);

/// Text format: one header line "L n_targets shift_step bit_rate_hz family",
/// then the base sequence as space-separated +1/-1 (0/1 accepted on read,
/// 0 mapping to -1).
void save_codebook(const CodeBook& book, const std::filesystem::path& path);
CodeBook load_codebook(const std::filesystem::path& path);

}  // namespace cvep
