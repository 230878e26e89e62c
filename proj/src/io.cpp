#include "flowfilt/io.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <sstream>

#include <json.hpp>

namespace flowfilt {

std::string formatDouble(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

namespace {

std::vector<std::string> splitCsvLine(const std::string& line) {
    std::vector<std::string> out;
    std::string field;
    std::stringstream ss(line);
    while (std::getline(ss, field, ',')) {
        out.push_back(field);
    }
    if (!line.empty() && line.back() == ',') {
        out.emplace_back();
    }
    return out;
}

double parseDouble(const std::string& s, const char* what) {
    try {
        std::size_t pos = 0;
        double v = std::stod(s, &pos);
        if (pos != s.size()) {
            throw std::invalid_argument(s);
        }
        return v;
    } catch (const std::exception&) {
        throw DomainError(std::string("cannot parse ") + what + " value '" + s + "'");
    }
}

} // namespace

void writeParticleCsv(std::ostream& out, const ParticleSet& set) {
    out << "weight";
    for (Index d = 0; d < set.dim(); ++d) {
        out << ",x" << (d + 1);
    }
    out << "\n";
    for (Index i = 0; i < set.count(); ++i) {
        out << formatDouble(set.weights()[i]);
        for (Index d = 0; d < set.dim(); ++d) {
            out << "," << formatDouble(set.locations()(i, d));
        }
        out << "\n";
    }
}

void writeParticleCsv(const std::string& path, const ParticleSet& set) {
    std::ofstream f(path);
    if (!f) {
        throw Error("cannot open '" + path + "' for writing");
    }
    writeParticleCsv(f, set);
}

ParticleSet readParticleCsv(std::istream& in) {
    std::string line;
    if (!std::getline(in, line)) {
        throw DomainError("particle CSV is empty");
    }
    if (!line.empty() && line.back() == '\r') line.pop_back();
    const auto header = splitCsvLine(line);
    if (header.empty() || header[0] != "weight") {
        throw DomainError("particle CSV must start with a 'weight,x1,...' header");
    }
    const Index dim = static_cast<Index>(header.size()) - 1;
    if (dim < 1) {
        throw DomainError("particle CSV has no state columns");
    }
    std::vector<double> weights;
    std::vector<double> coords;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        const auto fields = splitCsvLine(line);
        if (static_cast<Index>(fields.size()) != dim + 1) {
            throw DomainError("particle CSV row has wrong field count: '" + line + "'");
        }
        weights.push_back(parseDouble(fields[0], "weight"));
        for (Index d = 0; d < dim; ++d) {
            coords.push_back(parseDouble(fields[d + 1], "location"));
        }
    }
    const Index count = static_cast<Index>(weights.size());
    if (count < 1) {
        throw DomainError("particle CSV contains no particles");
    }
    Matrix locations(count, dim);
    Vector w(count);
    for (Index i = 0; i < count; ++i) {
        w[i] = weights[i];
        for (Index d = 0; d < dim; ++d) {
            locations(i, d) = coords[i * dim + d];
        }
    }
    return ParticleSet(std::move(locations), std::move(w));
}

ParticleSet readParticleCsv(const std::string& path) {
    std::ifstream f(path);
    if (!f) {
        throw Error("cannot open particle CSV '" + path + "'");
    }
    return readParticleCsv(f);
}

std::string estimatesCsv(const std::vector<StepRecord>& records) {
    std::ostringstream out;
    Index dim = records.empty() ? 0 : records.front().mean.size();
    out << "step,method";
    for (Index d = 0; d < dim; ++d) out << ",mean_" << (d + 1);
    for (Index r = 0; r < dim; ++r) {
        for (Index c = 0; c < dim; ++c) out << ",cov_" << (r + 1) << (c + 1);
    }
    out << ",ess\n";
    for (const auto& rec : records) {
        out << rec.step << "," << methodName(rec.method);
        for (Index d = 0; d < dim; ++d) out << "," << formatDouble(rec.mean[d]);
        for (Index r = 0; r < dim; ++r) {
            for (Index c = 0; c < dim; ++c) out << "," << formatDouble(rec.covariance(r, c));
        }
        out << "," << formatDouble(rec.ess) << "\n";
    }
    return out.str();
}

std::vector<StepRecord> readEstimatesCsv(std::istream& in, Index state_dim) {
    std::string line;
    if (!std::getline(in, line)) {
        throw DomainError("estimates CSV is empty");
    }
    std::vector<StepRecord> records;
    const Index expected = 2 + state_dim + state_dim * state_dim + 1;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        const auto fields = splitCsvLine(line);
        if (static_cast<Index>(fields.size()) != expected) {
            throw DomainError("estimates CSV row has wrong field count");
        }
        StepRecord rec{};
        rec.step = static_cast<int>(parseDouble(fields[0], "step"));
        const auto method = methodFromName(fields[1]);
        if (!method) {
            throw DomainError("unknown method '" + fields[1] + "' in estimates CSV");
        }
        rec.method = *method;
        rec.mean.resize(state_dim);
        Index f = 2;
        for (Index d = 0; d < state_dim; ++d) rec.mean[d] = parseDouble(fields[f++], "mean");
        rec.covariance.resize(state_dim, state_dim);
        for (Index r = 0; r < state_dim; ++r) {
            for (Index c = 0; c < state_dim; ++c) {
                rec.covariance(r, c) = parseDouble(fields[f++], "covariance");
            }
        }
        rec.ess = parseDouble(fields[f++], "ess");
        rec.wall_ms = 0.0;  // not part of the table; report.json carries timings
        records.push_back(std::move(rec));
    }
    return records;
}

std::string traceCsv(const FlowTrace& trace) {
    std::ostringstream out;
    const Index dim = trace.snapshots.empty() ? 0 : trace.snapshots.front().second.dim();
    out << "gamma,particle_index";
    for (Index d = 0; d < dim; ++d) out << ",x" << (d + 1);
    out << "\n";
    for (const auto& [gamma, set] : trace.snapshots) {
        for (Index i = 0; i < set.count(); ++i) {
            out << formatDouble(gamma) << "," << i;
            for (Index d = 0; d < dim; ++d) {
                out << "," << formatDouble(set.locations()(i, d));
            }
            out << "\n";
        }
    }
    return out.str();
}

std::string traceDiagnosticsJson(const FlowTrace& trace) {
    nlohmann::json steps = nlohmann::json::array();
    for (const auto& s : trace.steps) {
        steps.push_back({{"gamma", s.gamma},
                         {"grad_norm", s.grad_norm},
                         {"damping", s.damping},
                         {"step_size", s.step_size},
                         {"cond_estimate", s.cond_estimate}});
    }
    nlohmann::json doc{{"steps", steps}};
    return doc.dump(2);
}

} // namespace flowfilt
