#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "fedrac/assignment.hpp"
#include "fedrac/clustering.hpp"
#include "fedrac/engine.hpp"

namespace fedrac {

// JSON summary of a run. Doubles are written in shortest round-trip form so
// equal reports serialize to equal bytes.
std::string report_to_json(const ExperimentReport& r);

/// Inverse of report_to_json (per-round records are not part of the summary).
/// Throws DataError on anything malformed.
ExperimentReport report_from_json(const std::string& text, const std::string& source = "report");

ExperimentReport load_report(const std::filesystem::path& path);

/// round,cluster,global_loss,round_seconds,cumulative_seconds,mar_violation,accuracy,f1
std::string rounds_csv(const ExperimentReport& r);

/// cluster,round,participant,loss
std::string local_losses_csv(const ExperimentReport& r);

/// participant,cluster,n,tau,reductions
std::string assignment_csv(std::span<const AssignmentEntry> log);

/// k,dunn_index then participant,cluster
std::string clustering_text(const ClusterSelection& sel, const Partition& final_partition,
                            std::span<const Participant> population);

/// Writes report.json, rounds.csv, local_losses.csv, assignment.csv and one
/// checkpoint per trained cluster into dir.
void write_report_files(const std::filesystem::path& dir, const ExperimentReport& r);

void write_text_file(const std::filesystem::path& path, const std::string& text);

/// Accuracy / F1 per cluster and rounds-to-reach per threshold with TRR,
/// one column per report.
std::string render_tables(std::span<const ExperimentReport> reports, std::span<const std::string> names,
                          std::span<const double> thresholds);

}  // namespace fedrac
