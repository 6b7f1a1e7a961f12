#pragma once

#include <array>
#include <compare>
#include <cstddef>
#include <string>
#include <string_view>

namespace probmed {

/// Three non-text modalities and the text binder.
enum class Modality { A = 0, B = 1, C = 2, Text = 3 };

inline constexpr std::size_t kNumModalities = 4;
inline constexpr std::array<Modality, kNumModalities> kAllModalities = {
    Modality::A, Modality::B, Modality::C, Modality::Text};

constexpr std::size_t index_of(Modality m) { return static_cast<std::size_t>(m); }

std::string_view to_string(Modality m);
/// "A", "B", "C", "TEXT" (case-insensitive).
Modality parse_modality(std::string_view name);

struct ModalityPair {
  Modality first = Modality::A;
  Modality second = Modality::Text;

  bool involves(Modality m) const { return first == m || second == m; }
  friend auto operator<=>(const ModalityPair&, const ModalityPair&) = default;
};

/// "A-TEXT" style name.
std::string to_string(ModalityPair pair);
ModalityPair parse_pair(std::string_view name);

/// The pairs trained by default: (A,TEXT), (B,TEXT), (C,TEXT), (A,B).
inline constexpr std::array<ModalityPair, 4> kTrainablePairs = {
    ModalityPair{Modality::A, Modality::Text}, ModalityPair{Modality::B, Modality::Text},
    ModalityPair{Modality::C, Modality::Text}, ModalityPair{Modality::A, Modality::B}};

/// Pair never co-trained; used to probe emergent alignment.
inline constexpr ModalityPair kEmergentPair{Modality::A, Modality::C};

}  // namespace probmed
