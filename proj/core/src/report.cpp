#include "fedlpa/report.hpp"

#include <cmath>
#include <fstream>
#include <iomanip>
#include <map>
#include <sstream>

#include "fedlpa/errors.hpp"

namespace fedlpa {

MeanStd mean_std(std::span<const double> values) {
  if (values.empty()) throw InputError("mean_std: no values");
  double sum = 0.0;
  for (double v : values) sum += v;
  const double mean = sum / static_cast<double>(values.size());
  double sq = 0.0;
  for (double v : values) sq += (v - mean) * (v - mean);
  return {mean, std::sqrt(sq / static_cast<double>(values.size()))};
}

void write_results_csv(std::ostream& out, const ExperimentReport& report) {
  out << "dataset,partition,beta_or_k,clients,epochs,method,seed,accuracy,comm_floats,"
         "solver_iters,seconds\n";
  for (const MethodResult& r : report.results) {
    out << report.dataset << ',' << report.partition << ',' << report.beta_or_k << ','
        << report.clients << ',' << report.epochs << ',' << method_name(r.method) << ','
        << r.seed << ',';
    if (r.ok) {
      out << std::setprecision(6) << std::fixed << r.accuracy;
    } else {
      out << "nan";
    }
    out.unsetf(std::ios::floatfield);
    out << ',' << r.communication.upload_floats << ',' << r.solver_steps << ','
        << std::setprecision(3) << std::fixed << r.seconds << '\n';
    out.unsetf(std::ios::floatfield);
    out << std::setprecision(6);
  }
}

void write_summary(std::ostream& out, const ExperimentReport& report) {
  out << report.dataset << "  partition=" << report.partition << " (" << report.beta_or_k
      << ")  clients=" << report.clients << "  epochs=" << report.epochs << "  seeds="
      << report.seeds.size() << "\n\n";
  std::vector<Method> order;
  std::map<Method, std::vector<double>> accuracies;
  std::map<Method, std::uint64_t> floats;
  for (const MethodResult& r : report.results) {
    if (!accuracies.contains(r.method)) order.push_back(r.method);
    auto& acc = accuracies[r.method];
    if (r.ok) acc.push_back(100.0 * r.accuracy);
    floats[r.method] = r.communication.upload_floats;
  }
  out << std::left << std::setw(12) << "method" << std::setw(18) << "accuracy (%)"
      << std::setw(8) << "runs" << "upload floats\n";
  for (Method m : order) {
    const auto& acc = accuracies[m];
    std::ostringstream cell;
    if (acc.empty()) {
      cell << "-";
    } else {
      const MeanStd s = mean_std(acc);
      cell << std::fixed << std::setprecision(2) << s.mean << " +- " << s.std;
    }
    out << std::left << std::setw(12) << method_name(m) << std::setw(18) << cell.str()
        << std::setw(8) << acc.size() << floats[m] << '\n';
  }
  bool header = false;
  for (const MethodResult& r : report.results) {
    if (r.ok) continue;
    if (!header) {
      out << "\nfailed runs:\n";
      header = true;
    }
    out << "  " << method_name(r.method) << " seed " << r.seed << ": " << r.error << '\n';
  }
}

void write_rounds_csv(std::ostream& out, std::span<const RoundSeries> series) {
  out << "round,method,seed,accuracy\n";
  for (const RoundSeries& s : series) {
    for (std::size_t i = 0; i < s.accuracy.size(); ++i) {
      const std::string method = i == 0 ? method_name(s.first_method)
                                        : method_name(s.subsequent_method);
      out << i + 1 << ',' << method << ',' << s.seed << ',' << std::fixed << std::setprecision(6)
          << s.accuracy[i] << '\n';
      out.unsetf(std::ios::floatfield);
    }
  }
}

namespace {

template <typename Writer>
void write_file(const std::filesystem::path& path, Writer&& writer) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write", path.string());
  writer(out);
  out.flush();
  if (!out) throw IoError("write failed", path.string());
}

}  // namespace

void emit_report(const ExperimentReport& report, const std::filesystem::path& out_dir) {
  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  if (ec) throw IoError("cannot create directory (" + ec.message() + ")", out_dir.string());
  write_file(out_dir / "results.csv", [&](std::ostream& o) { write_results_csv(o, report); });
  write_file(out_dir / "summary.txt", [&](std::ostream& o) { write_summary(o, report); });
}

}  // namespace fedlpa
