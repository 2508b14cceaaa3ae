#include <fstream>

#include <fmt/format.h>

#include "gseo/error.hpp"
#include "gseo/experiment_runner.hpp"
#include "gseo/svg.hpp"

namespace gseo {

namespace fs = std::filesystem;

namespace {

struct Column {
  const char* metric;
  const char* header;
};

// Objective block, then the seven judged dimensions, then their average.
constexpr Column kColumns[] = {
    {"word_count", "Word Count"},          {"position_count", "Posi. Count"},
    {"objective_overall", "**Over.**"},    {"relevance", "Rele."},
    {"influence", "Infl."},                {"uniqueness", "Uniq."},
    {"diversity", "Dive."},                {"click_likelihood", "Clic."},
    {"subjective_position", "Sub.Posi."},  {"subjective_volume", "Sub.Volu."},
    {"subjective_average", "**Aver.**"},
};

std::string fixed2(double v) {
  std::string s = fmt::format("{:.2f}", v);
  if (s == "-0.00") s = "0.00";
  return s;
}

std::string percent1(double rate) {
  std::string s = fmt::format("{:.1f}%", rate * 100.0);
  if (s == "-0.0%") s = "0.0%";
  return s;
}

}  // namespace

ReportFormat report_format_from_string(std::string_view name) {
  if (name == "md" || name == "markdown") return ReportFormat::markdown;
  if (name == "csv") return ReportFormat::csv;
  if (name == "svg") return ReportFormat::svg;
  throw Error("invalid-input", fmt::format("unknown report format '{}' (md, csv, svg)", name));
}

std::string render_markdown(const ExperimentReport& report) {
  const auto& m = report.metadata;
  std::string out = "# G-SEO experiment report\n\n";
  out += fmt::format("- run: `{}`\n- config digest: `{}`\n- templates: {}\n- samples: {} (seed {})\n",
                     m.run_id, m.config_digest, m.template_version, m.sample_count, m.seed);
  out += fmt::format("- tasks: {} of {}\n\n", report.completed_tasks, report.expected_tasks);

  out += "## Mean improvement (%)\n\n";
  out += "Objective columns are PAWC based; subjective columns are judge scores.\n\n";
  out += "| Method |";
  for (const auto& c : kColumns) out += fmt::format(" {} |", c.header);
  out += "\n|---|";
  for (std::size_t i = 0; i < std::size(kColumns); ++i) out += "---:|";
  out += "\n";
  for (const auto& row : report.rows) {
    out += fmt::format("| {} |", display_name(row.strategy));
    for (const auto& c : kColumns) out += fmt::format(" {} |", fixed2(row.mean_improvements.at(c.metric)));
    out += "\n";
  }

  out += "\n## Adaptability\n\n";
  out += "Share of tasks whose average subjective improvement is above zero.\n\n";
  out += "| Method | Tasks | Failures | Adaptability |\n|---|---:|---:|---:|\n";
  for (const auto& row : report.rows) {
    out += fmt::format("| {} | {} | {} | {} |\n", display_name(row.strategy), row.tasks, row.failures,
                       percent1(row.adaptability_rate));
  }

  if (!report.per_sample.empty()) {
    out += "\n## Per-sample means\n\n";
    out += "| Sample | Method | Tasks | **Over.** | **Aver.** |\n|---|---|---:|---:|---:|\n";
    for (const auto& s : report.per_sample) {
      out += fmt::format("| {} | {} | {} | {} | {} |\n", s.sample_id, display_name(s.strategy), s.tasks,
                         fixed2(s.objective_overall), fixed2(s.subjective_average));
    }
  }

  out += "\n## Reference values\n\n";
  out += fmt::format(
      "Published full-scale results (100 samples, 500 tasks): RAID G-SEO reached {:.2f} on "
      "**Over.** and {:.2f} on **Aver.**, with an adaptability of {:.1f}% against {:.1f}% for "
      "Term. Addi. Runs with other models or fewer samples are only comparable in direction.\n",
      ReferenceValues::raid_objective_overall, ReferenceValues::raid_subjective_average,
      ReferenceValues::raid_adaptability * 100.0, ReferenceValues::terminology_adaptability * 100.0);
  return out;
}

std::string render_csv(const ExperimentReport& report) {
  std::string out = "strategy,metric,mean_improvement_pct,tasks,failures\n";
  for (const auto& row : report.rows) {
    for (const auto& name : improvement_metric_names()) {
      out += fmt::format("{},{},{},{},{}\n", to_string(row.strategy), name, row.mean_improvements.at(name),
                         row.tasks, row.failures);
    }
  }
  return out;
}

std::string render_svg(const ExperimentReport& report) {
  std::vector<std::string> labels;
  svg::Series series{"adaptability (%)", {}};
  for (const auto& row : report.rows) {
    labels.emplace_back(display_name(row.strategy));
    series.values.push_back(row.adaptability_rate * 100.0);
  }
  return svg::grouped_bar_chart("Adaptability rate by strategy", labels, {series});
}

std::vector<fs::path> emit_report(const ExperimentReport& report, const std::set<ReportFormat>& formats,
                                  const fs::path& dir) {
  if (!report.complete()) {
    throw Error("report-incomplete", fmt::format("{} of {} tasks finished", report.completed_tasks,
                                                 report.expected_tasks));
  }
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw Error("io-error", fmt::format("cannot create {}: {}", dir.string(), ec.message()));

  std::vector<fs::path> written;
  for (ReportFormat f : formats) {
    std::string body;
    fs::path path;
    switch (f) {
      case ReportFormat::markdown:
        body = render_markdown(report);
        path = dir / "report.md";
        break;
      case ReportFormat::csv:
        body = render_csv(report);
        path = dir / "report.csv";
        break;
      case ReportFormat::svg:
        body = render_svg(report);
        path = dir / "report.svg";
        break;
    }
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    out << body;
    if (!out) throw Error("io-error", fmt::format("cannot write {}", path.string()));
    written.push_back(path);
  }
  return written;
}

}  // namespace gseo
