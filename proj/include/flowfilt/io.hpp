#ifndef FLOWFILT_IO_HPP
#define FLOWFILT_IO_HPP

#include <iosfwd>
#include <string>
#include <vector>

#include "flowfilt/filter.hpp"

namespace flowfilt {

// Particle-set text format: header "weight,x1,...,xN", one row per particle,
// '.' decimal, 17 significant digits (full double round-trip).
void writeParticleCsv(std::ostream& out, const ParticleSet& set);
void writeParticleCsv(const std::string& path, const ParticleSet& set);
ParticleSet readParticleCsv(std::istream& in);
ParticleSet readParticleCsv(const std::string& path);

// estimates.csv: step,method,mean_*,cov_* (row-major),ess. Wall times live
// in report.json only, so the table is bit-identical across reruns of the
// same seeded config.
std::string estimatesCsv(const std::vector<StepRecord>& records);
std::vector<StepRecord> readEstimatesCsv(std::istream& in, Index state_dim);

// trace.csv: gamma,particle_index,x1..xN over every snapshot.
std::string traceCsv(const FlowTrace& trace);

// JSON diagnostics sidecar for a flow trace (per-step gradient norm,
// damping, step size, condition estimate).
std::string traceDiagnosticsJson(const FlowTrace& trace);

// Full double precision (17 significant digits).
std::string formatDouble(double v);

} // namespace flowfilt

#endif
