#include <array>
#include <charconv>
#include <cmath>
#include <fstream>
#include <istream>
#include <ostream>
#include <string_view>

#include "scbridge/dataset.hpp"
#include "scbridge/errors.hpp"

namespace scbridge {

namespace {

constexpr std::array<std::string_view, 4> kMetaColumns{"cell_id", "cell_type", "perturbation", "dosage"};

std::vector<std::string_view> split_fields(std::string_view line) {
    std::vector<std::string_view> fields;
    std::size_t start = 0;
    while (true) {
        const auto comma = line.find(',', start);
        if (comma == std::string_view::npos) {
            fields.push_back(line.substr(start));
            break;
        }
        fields.push_back(line.substr(start, comma - start));
        start = comma + 1;
    }
    return fields;
}

std::string at_line(std::size_t line_no) {
    return "line " + std::to_string(line_no) + ": ";
}

double parse_double(std::string_view text, std::size_t line_no, std::string_view column) {
    double value = 0.0;
    const auto* first = text.data();
    const auto* last = text.data() + text.size();
    if (!text.empty() && *first == '+') {
        ++first;
    }
    auto [ptr, ec] = std::from_chars(first, last, value);
    if (ec != std::errc() || ptr != last || text.empty()) {
        throw DataError(at_line(line_no) + "cannot parse '" + std::string(text) + "' in column '" +
                        std::string(column) + "'");
    }
    if (!std::isfinite(value)) {
        throw DataError(at_line(line_no) + "non-finite value in column '" + std::string(column) + "'");
    }
    return value;
}

}  // namespace

std::string format_number(double value) {
    std::array<char, 32> buffer{};
    auto [ptr, ec] = std::to_chars(buffer.data(), buffer.data() + buffer.size(), value);
    if (ec != std::errc()) {
        throw DataError("format_number: conversion failed");
    }
    return std::string(buffer.data(), ptr);
}

ExpressionDataset read_matrix(std::istream& in, ProvenanceHint hint) {
    std::string line;
    if (!std::getline(in, line)) {
        throw DataError("line 1: missing header");
    }
    if (!line.empty() && line.back() == '\r') {
        line.pop_back();
    }
    const auto header = split_fields(line);
    if (header.size() < kMetaColumns.size() + 1) {
        throw DataError("line 1: header needs cell_id,cell_type,perturbation,dosage and at least one gene");
    }
    for (std::size_t k = 0; k < kMetaColumns.size(); ++k) {
        if (header[k] != kMetaColumns[k]) {
            throw DataError("line 1: unknown condition column '" + std::string(header[k]) + "', expected '" +
                            std::string(kMetaColumns[k]) + "'");
        }
    }

    ExpressionDataset ds;
    for (std::size_t k = kMetaColumns.size(); k < header.size(); ++k) {
        ds.genes.emplace_back(header[k]);
    }
    const std::size_t n_genes = ds.genes.size();

    std::vector<double> values;
    std::size_t line_no = 1;
    bool all_integral = true;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') {
            line.pop_back();
        }
        if (line.empty()) {
            continue;
        }
        const auto fields = split_fields(line);
        if (fields.size() != header.size()) {
            throw DataError(at_line(line_no) + "expected " + std::to_string(header.size()) + " fields, found " +
                            std::to_string(fields.size()));
        }
        CellRecord cell;
        cell.id = std::string(fields[0]);
        cell.condition.cell_type = ds.vocab.add_cell_type(std::string(fields[1]));
        cell.condition.perturbation = ds.vocab.add_perturbation(std::string(fields[2]));
        cell.condition.dosage = parse_double(fields[3], line_no, "dosage");
        if (cell.condition.dosage < 0.0) {
            throw DataError(at_line(line_no) + "negative dosage");
        }
        for (std::size_t g = 0; g < n_genes; ++g) {
            const double v = parse_double(fields[kMetaColumns.size() + g], line_no, ds.genes[g]);
            if (v < 0.0) {
                throw DataError(at_line(line_no) + "negative count for gene '" + ds.genes[g] + "'");
            }
            all_integral = all_integral && v == std::floor(v);
            values.push_back(v);
        }
        ds.cells.push_back(std::move(cell));
    }

    ds.values = Eigen::Map<Matrix>(values.data(), static_cast<Eigen::Index>(ds.cells.size()),
                                   static_cast<Eigen::Index>(n_genes));
    switch (hint) {
        case ProvenanceHint::raw:
            ds.provenance = Provenance::raw;
            break;
        case ProvenanceHint::log1p:
            ds.provenance = Provenance::log1p;
            break;
        case ProvenanceHint::detect:
            ds.provenance = all_integral ? Provenance::raw : Provenance::log1p;
            break;
    }
    return ds;
}

ExpressionDataset load_matrix(const std::filesystem::path& path, ProvenanceHint hint) {
    std::ifstream in(path);
    if (!in) {
        throw DataError("cannot open expression file '" + path.string() + "'");
    }
    try {
        return read_matrix(in, hint);
    } catch (const DataError& e) {
        throw DataError(path.string() + ": " + e.what());
    }
}

void write_matrix(std::ostream& out, const ExpressionDataset& ds) {
    out << "cell_id,cell_type,perturbation,dosage";
    for (const auto& g : ds.genes) {
        out << ',' << g;
    }
    out << '\n';
    for (std::size_t i = 0; i < ds.cell_count(); ++i) {
        const auto& cell = ds.cells[i];
        out << cell.id << ',' << ds.vocab.cell_type_name(cell.condition.cell_type) << ','
            << ds.vocab.perturbation_name(cell.condition.perturbation) << ',' << format_number(cell.condition.dosage);
        for (std::size_t g = 0; g < ds.gene_count(); ++g) {
            out << ',' << format_number(ds.values(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(g)));
        }
        out << '\n';
    }
}

void save_matrix(const std::filesystem::path& path, const ExpressionDataset& ds) {
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw DataError("cannot write expression file '" + path.string() + "'");
    }
    write_matrix(out, ds);
    if (!out) {
        throw DataError("write failed for '" + path.string() + "'");
    }
}

void write_shifts(std::ostream& out, const SyntheticData& data) {
    const auto& ds = data.dataset;
    out << "perturbation,dosage,cell_type";
    for (const auto& g : ds.genes) {
        out << ',' << g;
    }
    out << '\n';
    for (const auto& entry : data.shifts) {
        out << ds.vocab.perturbation_name(entry.condition.perturbation) << ',' << format_number(entry.condition.dosage)
            << ',' << ds.vocab.cell_type_name(entry.condition.cell_type);
        for (Eigen::Index g = 0; g < entry.shift.size(); ++g) {
            out << ',' << format_number(entry.shift[g]);
        }
        out << '\n';
    }
}

}  // namespace scbridge
