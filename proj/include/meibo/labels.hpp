#pragma once

#include <array>
#include <optional>
#include <string>
#include <string_view>

#include <json.hpp>

namespace meibo {

enum class TriState { Unknown, Yes, No };

enum class Disease { DryEye, Mgd, Blepharitis };

inline constexpr std::array<Disease, 3> kAllDiseases{Disease::DryEye, Disease::Mgd,
                                                     Disease::Blepharitis};

/// Independent per-condition labels; no implication between them is enforced.
struct DiseaseLabels {
    TriState dry_eye = TriState::Unknown;
    TriState mgd = TriState::Unknown;
    TriState blepharitis = TriState::Unknown;

    TriState& operator[](Disease d);
    TriState operator[](Disease d) const;

    bool all_definite() const;
    bool all_unknown() const;

    friend bool operator==(const DiseaseLabels&, const DiseaseLabels&) = default;
};

std::string_view to_string(TriState s);
std::string_view to_string(Disease d);       // "dry_eye", "mgd", "blepharitis"
std::string_view display_name(Disease d);     // "DE", "MGD", "Blepharitis"

/// Accepts yes/no/y/n/true/false/1/0/unknown and the empty string (case-insensitive).
std::optional<TriState> parse_tristate(std::string_view text);

nlohmann::json to_json(const DiseaseLabels& labels);
DiseaseLabels labels_from_json(const nlohmann::json& j);

}  // namespace meibo
