#include "scbridge/conditioning.hpp"

#include <cmath>
#include <istream>
#include <ostream>
#include <sstream>

#include "scbridge/errors.hpp"

namespace scbridge {

Vocabulary::Vocabulary() {
    perturbations_.emplace_back(kControlName);
    perturbation_index_.emplace(std::string(kControlName), kControlId);
}

std::uint32_t Vocabulary::add_cell_type(const std::string& name) {
    if (auto it = cell_type_index_.find(name); it != cell_type_index_.end()) {
        return it->second;
    }
    const auto id = static_cast<std::uint32_t>(cell_types_.size());
    cell_types_.push_back(name);
    cell_type_index_.emplace(name, id);
    return id;
}

std::uint32_t Vocabulary::add_perturbation(const std::string& name) {
    if (auto it = perturbation_index_.find(name); it != perturbation_index_.end()) {
        return it->second;
    }
    const auto id = static_cast<std::uint32_t>(perturbations_.size());
    perturbations_.push_back(name);
    perturbation_index_.emplace(name, id);
    return id;
}

std::uint32_t Vocabulary::cell_type_id(const std::string& name) const {
    auto it = cell_type_index_.find(name);
    if (it == cell_type_index_.end()) {
        throw VocabularyError("unknown cell type '" + name + "'");
    }
    return it->second;
}

std::uint32_t Vocabulary::perturbation_id(const std::string& name) const {
    auto it = perturbation_index_.find(name);
    if (it == perturbation_index_.end()) {
        throw VocabularyError("unknown perturbation '" + name + "'");
    }
    return it->second;
}

const std::string& Vocabulary::cell_type_name(std::uint32_t id) const {
    if (id >= cell_types_.size()) {
        throw VocabularyError("cell type id " + std::to_string(id) + " out of range");
    }
    return cell_types_[id];
}

const std::string& Vocabulary::perturbation_name(std::uint32_t id) const {
    if (id >= perturbations_.size()) {
        throw VocabularyError("perturbation id " + std::to_string(id) + " out of range");
    }
    return perturbations_[id];
}

void Vocabulary::check(const ConditionKey& key) const {
    if (key.cell_type >= cell_types_.size()) {
        throw VocabularyError("cell type id " + std::to_string(key.cell_type) + " out of range");
    }
    if (key.perturbation >= perturbations_.size()) {
        throw VocabularyError("perturbation id " + std::to_string(key.perturbation) + " out of range");
    }
    if (!std::isfinite(key.dosage) || key.dosage < 0.0) {
        throw VocabularyError("dosage must be finite and non-negative");
    }
}

void Vocabulary::save(std::ostream& out) const {
    for (std::size_t i = 0; i < cell_types_.size(); ++i) {
        out << "cell_type," << i << ',' << cell_types_[i] << '\n';
    }
    for (std::size_t i = 0; i < perturbations_.size(); ++i) {
        out << "perturbation," << i << ',' << perturbations_[i] << '\n';
    }
}

Vocabulary Vocabulary::load(std::istream& in) {
    Vocabulary vocab;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) {
            continue;
        }
        const auto first = line.find(',');
        const auto second = first == std::string::npos ? first : line.find(',', first + 1);
        if (second == std::string::npos) {
            throw DataError("vocabulary line " + std::to_string(line_no) + ": expected kind,id,name");
        }
        const std::string kind = line.substr(0, first);
        const std::string id_text = line.substr(first + 1, second - first - 1);
        const std::string name = line.substr(second + 1);
        std::uint32_t id = 0;
        try {
            id = static_cast<std::uint32_t>(std::stoul(id_text));
        } catch (const std::exception&) {
            throw DataError("vocabulary line " + std::to_string(line_no) + ": bad id '" + id_text + "'");
        }
        std::uint32_t assigned = 0;
        if (kind == "cell_type") {
            assigned = vocab.add_cell_type(name);
        } else if (kind == "perturbation") {
            assigned = vocab.add_perturbation(name);
        } else {
            throw DataError("vocabulary line " + std::to_string(line_no) + ": unknown kind '" + kind + "'");
        }
        if (assigned != id) {
            throw DataError("vocabulary line " + std::to_string(line_no) + ": ids must be dense and ordered");
        }
    }
    return vocab;
}

ConditionTables add_condition_tables(ParameterSet& params, const Vocabulary& vocab, Rng& rng) {
    ConditionTables tables;
    tables.cell_type = params.embeddings.size();
    params.embeddings.push_back(init_embedding(vocab.cell_type_count(), kTableWidth, kEmbeddingInitScale, rng));
    tables.perturbation = params.embeddings.size();
    params.embeddings.push_back(init_embedding(vocab.perturbation_count(), kTableWidth, kEmbeddingInitScale, rng));
    tables.dosage_direction = params.embeddings.size();
    params.embeddings.push_back(init_embedding(1, kEmbeddingWidth, kEmbeddingInitScale, rng));
    return tables;
}

namespace {

void check_ids(const ConditionKey& key, const ParameterSet& params, const ConditionTables& tables) {
    if (tables.dosage_direction >= params.embeddings.size()) {
        throw StateError("embed: parameter set has no condition tables");
    }
    if (key.cell_type >= params.embeddings[tables.cell_type].rows()) {
        throw VocabularyError("embed: cell type id " + std::to_string(key.cell_type) + " outside the table");
    }
    if (key.perturbation >= params.embeddings[tables.perturbation].rows()) {
        throw VocabularyError("embed: perturbation id " + std::to_string(key.perturbation) + " outside the table");
    }
}

}  // namespace

RowVector embed(const ConditionKey& key, const ParameterSet& params, const ConditionTables& tables) {
    check_ids(key, params, tables);
    RowVector out(kEmbeddingWidth);
    out.head(kTableWidth) = params.embeddings[tables.cell_type].value.row(key.cell_type);
    out.tail(kTableWidth) = params.embeddings[tables.perturbation].value.row(key.perturbation);
    if (key.dosage != 0.0) {
        out += key.dosage * params.embeddings[tables.dosage_direction].value.row(0);
    }
    return out;
}

void embed_backward(const ConditionKey& key, const Eigen::Ref<const RowVector>& grad, ParameterSet& params,
                    const ConditionTables& tables) {
    check_ids(key, params, tables);
    if (grad.size() != static_cast<Eigen::Index>(kEmbeddingWidth)) {
        throw DimensionError("embed_backward: gradient width must be " + std::to_string(kEmbeddingWidth));
    }
    params.embeddings[tables.cell_type].grad.row(key.cell_type) += grad.head(kTableWidth);
    params.embeddings[tables.perturbation].grad.row(key.perturbation) += grad.tail(kTableWidth);
    params.embeddings[tables.dosage_direction].grad.row(0) += key.dosage * grad;
}

}  // namespace scbridge
