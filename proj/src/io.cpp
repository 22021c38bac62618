#include "sldais/io.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>
#include <vector>

#include <json.hpp>

namespace sldais {

namespace {

std::vector<std::string> split_row(const std::string& line) {
  std::vector<std::string> cells;
  std::string cell;
  std::istringstream s(line);
  while (std::getline(s, cell, ',')) cells.push_back(cell);
  if (!line.empty() && line.back() == ',') cells.emplace_back();
  return cells;
}

std::string trim(const std::string& s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string::npos) return "";
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

bool parse_double(const std::string& text, double& out) {
  if (text.empty()) return false;
  const char* begin = text.data();
  const char* end = begin + text.size();
  if (*begin == '+') ++begin;
  const auto [ptr, ec] = std::from_chars(begin, end, out);
  return ec == std::errc() && ptr == end && std::isfinite(out);
}

}  // namespace

parse_error::parse_error(const std::string& path, std::size_t line,
                         const std::string& detail)
    : std::runtime_error(line > 0 ? path + ":" + std::to_string(line) + ": " +
                                        detail
                                  : path + ": " + detail),
      line_(line) {}

dataset parse_csv(std::istream& in, const std::string& name) {
  std::string line;
  std::size_t line_no = 0;
  std::vector<std::string> header;
  while (std::getline(in, line)) {
    ++line_no;
    if (line_no == 1 && line.rfind("\xEF\xBB\xBF", 0) == 0) line.erase(0, 3);
    if (!trim(line).empty()) {
      header = split_row(line);
      break;
    }
  }
  if (header.empty()) throw parse_error(name, 0, "missing header row");
  std::size_t y_col = header.size();
  std::vector<std::string> names;
  for (std::size_t c = 0; c < header.size(); ++c) {
    header[c] = trim(header[c]);
    if (header[c] == "y") {
      if (y_col != header.size()) {
        throw parse_error(name, line_no, "duplicate \"y\" column");
      }
      y_col = c;
    } else {
      names.push_back(header[c]);
    }
  }
  if (y_col == header.size()) {
    throw parse_error(name, line_no, "no column named \"y\"");
  }

  std::vector<double> xs;
  std::vector<double> ys;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    const auto cells = split_row(line);
    if (cells.size() != header.size()) {
      throw parse_error(name, line_no,
                        "expected " + std::to_string(header.size()) +
                            " cells, found " + std::to_string(cells.size()));
    }
    for (std::size_t c = 0; c < cells.size(); ++c) {
      double v = 0.0;
      const std::string cell = trim(cells[c]);
      if (!parse_double(cell, v)) {
        throw parse_error(name, line_no,
                          "non-numeric value '" + cell + "' in column '" +
                              header[c] + "'");
      }
      (c == y_col ? ys : xs).push_back(v);
    }
  }
  if (ys.empty()) throw parse_error(name, 0, "no data rows");
  const auto n = static_cast<Eigen::Index>(ys.size());
  const auto d = static_cast<Eigen::Index>(names.size());
  Eigen::MatrixXd x(n, d);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index c = 0; c < d; ++c) x(i, c) = xs[i * d + c];
  }
  return dataset::make(std::move(x),
                       Eigen::Map<const Eigen::VectorXd>(ys.data(), n),
                       std::move(names));
}

dataset load_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw parse_error(path, 0, "cannot open file");
  return parse_csv(in, path);
}

void write_csv(std::ostream& out, const dataset& data) {
  const auto d = data.dim();
  for (std::size_t c = 0; c < d; ++c) {
    out << (c < data.covariate_names.size() ? data.covariate_names[c]
                                            : "x" + std::to_string(c + 1))
        << ',';
  }
  out << "y\n";
  char buf[32];
  const auto put = [&](double v) {
    const auto r = std::to_chars(buf, buf + sizeof buf, v);
    out.write(buf, r.ptr - buf);
  };
  const Eigen::MatrixXd& x = *data.x;
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    for (Eigen::Index c = 0; c < x.cols(); ++c) {
      put(x(i, c));
      out << ',';
    }
    put(data.y[i]);
    out << '\n';
  }
  if (!out) throw std::runtime_error("write_csv: output stream failed");
}

dataset standardize(const dataset& data) {
  Eigen::MatrixXd x = *data.x;
  const double n = static_cast<double>(x.rows());
  for (Eigen::Index c = 0; c < x.cols(); ++c) {
    const double mean = x.col(c).mean();
    x.col(c).array() -= mean;
    const double sd = std::sqrt(x.col(c).squaredNorm() / n);
    if (sd > 0.0) x.col(c) /= sd;
  }
  return dataset::make(std::move(x), data.y, data.covariate_names);
}

void emit_metrics(std::ostream& out, const metrics_record& r) {
  nlohmann::ordered_json j;
  j["step"] = r.step;
  j["elbo_sample"] = r.elbo_sample ? nlohmann::ordered_json(*r.elbo_sample)
                                   : nlohmann::ordered_json(nullptr);
  j["lr"] = r.lr;
  j["eta_tilde"] = r.eta_tilde;
  j["kappa"] = r.kappa;
  j["gamma"] = r.gamma;
  j["divergences"] = r.divergences;
  j["wall_ms"] = r.wall_ms;
  out << j.dump() << '\n';
  if (!out) throw std::runtime_error("emit_metrics: output stream failed");
}

}  // namespace sldais
