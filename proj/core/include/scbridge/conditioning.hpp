#pragma once

#include <compare>
#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "scbridge/nn.hpp"

namespace scbridge {

/// Perturbation id reserved for unperturbed control cells.
inline constexpr std::uint32_t kControlId = 0;
inline constexpr std::string_view kControlName = "control";

/// Width of each lookup table; the embedding is their concatenation.
inline constexpr std::size_t kTableWidth = 32;
inline constexpr std::size_t kEmbeddingWidth = 2 * kTableWidth;
inline constexpr double kEmbeddingInitScale = 0.02;

/// Identifies one experimental population: cell type, perturbation and dosage (0 for genetic perturbations).
struct ConditionKey {
    std::uint32_t cell_type = 0;
    std::uint32_t perturbation = kControlId;
    double dosage = 0.0;

    bool is_control() const { return perturbation == kControlId; }

    friend auto operator<=>(const ConditionKey&, const ConditionKey&) = default;
    friend bool operator==(const ConditionKey&, const ConditionKey&) = default;
};

/**
 * @brief Name <-> id assignment for cell types and perturbations.
 *
 * Ids are dense and assigned in registration order; perturbation id 0 is always `control`.
 * The text form is one `kind,id,name` line per entry, with kind `cell_type` or `perturbation`.
 */
class Vocabulary {
public:
    Vocabulary();

    std::uint32_t add_cell_type(const std::string& name);
    std::uint32_t add_perturbation(const std::string& name);

    /// Throw VocabularyError naming the unknown entry.
    std::uint32_t cell_type_id(const std::string& name) const;
    std::uint32_t perturbation_id(const std::string& name) const;
    const std::string& cell_type_name(std::uint32_t id) const;
    const std::string& perturbation_name(std::uint32_t id) const;

    bool has_cell_type(const std::string& name) const { return cell_type_index_.contains(name); }
    bool has_perturbation(const std::string& name) const { return perturbation_index_.contains(name); }

    std::size_t cell_type_count() const { return cell_types_.size(); }
    std::size_t perturbation_count() const { return perturbations_.size(); }

    /// Throws VocabularyError if either id is out of range or dosage is not finite and non-negative.
    void check(const ConditionKey& key) const;

    void save(std::ostream& out) const;
    static Vocabulary load(std::istream& in);

    friend bool operator==(const Vocabulary& a, const Vocabulary& b) {
        return a.cell_types_ == b.cell_types_ && a.perturbations_ == b.perturbations_;
    }

private:
    std::vector<std::string> cell_types_;
    std::vector<std::string> perturbations_;
    std::unordered_map<std::string, std::uint32_t> cell_type_index_;
    std::unordered_map<std::string, std::uint32_t> perturbation_index_;
};

/// Positions of the condition tables inside ParameterSet::embeddings.
struct ConditionTables {
    std::size_t cell_type = 0;
    std::size_t perturbation = 1;
    std::size_t dosage_direction = 2;
};

/// Appends cell-type, perturbation and dosage-direction tables sized to `vocab` and returns their positions.
ConditionTables add_condition_tables(ParameterSet& params, const Vocabulary& vocab, Rng& rng);

/// `concat(cell_type_table[ct], perturbation_table[P]) + dosage * dosage_direction`.
RowVector embed(const ConditionKey& key, const ParameterSet& params, const ConditionTables& tables = {});

/// Scatters dL/d(embedding) into the table rows used by `key`.
void embed_backward(const ConditionKey& key, const Eigen::Ref<const RowVector>& grad, ParameterSet& params,
                    const ConditionTables& tables = {});

}  // namespace scbridge
