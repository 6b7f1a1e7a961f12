#include "probmed/modality.hpp"

#include <algorithm>
#include <cctype>
#include <stdexcept>

namespace probmed {

std::string_view to_string(Modality m) {
  switch (m) {
    case Modality::A: return "A";
    case Modality::B: return "B";
    case Modality::C: return "C";
    case Modality::Text: return "TEXT";
  }
  return "?";
}

Modality parse_modality(std::string_view name) {
  std::string upper(name);
  std::transform(upper.begin(), upper.end(), upper.begin(),
                 [](unsigned char c) { return static_cast<char>(std::toupper(c)); });
  if (upper == "A") return Modality::A;
  if (upper == "B") return Modality::B;
  if (upper == "C") return Modality::C;
  if (upper == "TEXT") return Modality::Text;
  throw std::invalid_argument("unknown modality '" + std::string(name) + "'");
}

std::string to_string(ModalityPair pair) {
  return std::string(to_string(pair.first)) + "-" + std::string(to_string(pair.second));
}

ModalityPair parse_pair(std::string_view name) {
  const auto dash = name.find('-');
  if (dash == std::string_view::npos) {
    throw std::invalid_argument("modality pair '" + std::string(name) + "' must look like A-TEXT");
  }
  return {parse_modality(name.substr(0, dash)), parse_modality(name.substr(dash + 1))};
}

}  // namespace probmed
