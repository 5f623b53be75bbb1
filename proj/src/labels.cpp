#include "meibo/labels.hpp"

#include <algorithm>
#include <cctype>

#include "meibo/error.hpp"

namespace meibo {

TriState& DiseaseLabels::operator[](Disease d) {
    switch (d) {
        case Disease::DryEye: return dry_eye;
        case Disease::Mgd: return mgd;
        case Disease::Blepharitis: return blepharitis;
    }
    return dry_eye;
}

TriState DiseaseLabels::operator[](Disease d) const {
    return const_cast<DiseaseLabels&>(*this)[d];
}

bool DiseaseLabels::all_definite() const {
    return std::ranges::all_of(kAllDiseases, [&](Disease d) { return (*this)[d] != TriState::Unknown; });
}

bool DiseaseLabels::all_unknown() const {
    return std::ranges::all_of(kAllDiseases, [&](Disease d) { return (*this)[d] == TriState::Unknown; });
}

std::string_view to_string(TriState s) {
    switch (s) {
        case TriState::Yes: return "Yes";
        case TriState::No: return "No";
        case TriState::Unknown: break;
    }
    return "Unknown";
}

std::string_view to_string(Disease d) {
    switch (d) {
        case Disease::DryEye: return "dry_eye";
        case Disease::Mgd: return "mgd";
        case Disease::Blepharitis: return "blepharitis";
    }
    return "";
}

std::string_view display_name(Disease d) {
    switch (d) {
        case Disease::DryEye: return "DE";
        case Disease::Mgd: return "MGD";
        case Disease::Blepharitis: return "Blepharitis";
    }
    return "";
}

std::optional<TriState> parse_tristate(std::string_view text) {
    std::string s;
    for (char c : text) {
        if (!std::isspace(static_cast<unsigned char>(c))) s += static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    }
    if (s == "yes" || s == "y" || s == "true" || s == "1") return TriState::Yes;
    if (s == "no" || s == "n" || s == "false" || s == "0") return TriState::No;
    if (s.empty() || s == "unknown" || s == "na" || s == "n/a") return TriState::Unknown;
    return std::nullopt;
}

nlohmann::json to_json(const DiseaseLabels& labels) {
    nlohmann::json j = nlohmann::json::object();
    for (Disease d : kAllDiseases) j[std::string(to_string(d))] = std::string(to_string(labels[d]));
    return j;
}

DiseaseLabels labels_from_json(const nlohmann::json& j) {
    DiseaseLabels labels;
    if (!j.is_object()) throw Error("malformed_labels", "labels must be a JSON object");
    for (Disease d : kAllDiseases) {
        auto it = j.find(std::string(to_string(d)));
        if (it == j.end() || it->is_null()) continue;
        auto parsed = it->is_string() ? parse_tristate(it->get<std::string>()) : std::nullopt;
        if (!parsed) throw Error("malformed_labels", "unparseable label for " + std::string(to_string(d)));
        labels[d] = *parsed;
    }
    return labels;
}

}  // namespace meibo
