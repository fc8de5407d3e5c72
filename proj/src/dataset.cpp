#include "poison/dataset.hpp"

#include "poison/error.hpp"
#include "poison/format.hpp"
#include "poison/rng.hpp"

#include <json.hpp>

#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

namespace poison {

std::string format_double(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, ptr);
}

std::string to_string(InputDomain domain) {
  switch (domain) {
    case InputDomain::Reals: return "reals";
    case InputDomain::UnitInterval: return "unit-interval";
    case InputDomain::NonnegInteger: return "nonneg-integer";
  }
  return "reals";
}

InputDomain parse_domain(const std::string& name) {
  if (name == "reals") return InputDomain::Reals;
  if (name == "unit-interval") return InputDomain::UnitInterval;
  if (name == "nonneg-integer") return InputDomain::NonnegInteger;
  throw ValidationError("unknown input domain '" + name + "'");
}

bool in_domain(InputDomain domain, const Eigen::Ref<const Vector>& x) {
  for (Index i = 0; i < x.size(); ++i) {
    double v = x[i];
    if (!std::isfinite(v)) return false;
    switch (domain) {
      case InputDomain::Reals: break;
      case InputDomain::UnitInterval:
        if (v < 0.0 || v > 1.0) return false;
        break;
      case InputDomain::NonnegInteger:
        if (v < 0.0 || v != std::floor(v)) return false;
        break;
    }
  }
  return true;
}

Dataset::Dataset(Index dim, InputDomain domain) : d_(dim), domain_(domain), X_(0, dim) {}

Dataset Dataset::from_points(Index dim, InputDomain domain, const std::vector<LabeledPoint>& points) {
  Dataset data(dim, domain);
  data.reserve(static_cast<Index>(points.size()));
  for (const auto& p : points) data.add(p.x, p.y, p.w);
  return data;
}

void Dataset::reserve(Index n) {
  if (n <= X_.rows()) return;
  X_.conservativeResize(n, d_);
  y_.conservativeResize(n);
  w_.conservativeResize(n);
}

void Dataset::add(const Eigen::Ref<const Vector>& x, int y, double w) {
  if (x.size() != d_) {
    throw ValidationError("point dimension " + std::to_string(x.size()) + " does not match dataset dimension " +
                          std::to_string(d_));
  }
  if (y != 1 && y != -1) throw ValidationError("labels must be -1 or +1, got " + std::to_string(y));
  if (!(w >= 0.0) || !std::isfinite(w)) throw ValidationError("weights must be finite and non-negative");
  if (n_ == X_.rows()) reserve(std::max<Index>(8, 2 * n_));
  X_.row(n_) = x.transpose();
  y_[n_] = y;
  w_[n_] = w;
  ++n_;
  total_weight_ += w;
}

LabeledPoint Dataset::point(Index i) const { return {X_.row(i).transpose(), y(i), w_[i]}; }

void Dataset::set_weight(Index i, double w) {
  if (!(w >= 0.0) || !std::isfinite(w)) throw ValidationError("weights must be finite and non-negative");
  total_weight_ += w - w_[i];
  w_[i] = w;
}

double Dataset::class_weight(int y) const {
  double total = 0.0;
  for (Index i = 0; i < n_; ++i)
    if (this->y(i) == y) total += w_[i];
  return total;
}

Index Dataset::class_count(int y) const {
  Index count = 0;
  for (Index i = 0; i < n_; ++i)
    if (this->y(i) == y) ++count;
  return count;
}

bool Dataset::has_both_classes() const { return class_weight(1) > 0.0 && class_weight(-1) > 0.0; }

Dataset Dataset::subset(const std::vector<Index>& indices) const {
  Dataset out(d_, domain_);
  out.reserve(static_cast<Index>(indices.size()));
  for (Index i : indices) out.add(X_.row(i).transpose(), y(i), w_[i]);
  return out;
}

Dataset Dataset::scaled(double factor) const {
  Dataset out = *this;
  out.total_weight_ = 0.0;
  for (Index i = 0; i < n_; ++i) {
    out.w_[i] = w_[i] * factor;
    out.total_weight_ += out.w_[i];
  }
  return out;
}

void Dataset::validate() const {
  for (Index i = 0; i < n_; ++i) {
    if (!in_domain(domain_, X_.row(i).transpose())) {
      std::ostringstream msg;
      msg << "point " << i << " violates the " << to_string(domain_) << " domain: [";
      for (Index j = 0; j < d_; ++j) {
        if (j > 0) msg << ", ";
        if (j == 8 && d_ > 10) {
          msg << "...";
          break;
        }
        msg << X_(i, j);
      }
      msg << "]";
      throw ValidationError(msg.str());
    }
  }
}

bool operator==(const Dataset& a, const Dataset& b) {
  if (a.d_ != b.d_ || a.n_ != b.n_ || a.domain_ != b.domain_) return false;
  return a.features() == b.features() && a.labels() == b.labels() && a.weights() == b.weights();
}

Dataset combine(const Dataset& a, const Dataset& b) {
  if (a.dim() != b.dim()) {
    throw ValidationError("cannot combine datasets of dimension " + std::to_string(a.dim()) + " and " +
                          std::to_string(b.dim()));
  }
  if (a.domain() != b.domain()) throw ValidationError("cannot combine datasets with different input domains");
  Dataset out(a.dim(), a.domain());
  out.reserve(a.size() + b.size());
  for (Index i = 0; i < a.size(); ++i) out.add(a.x(i).transpose(), a.y(i), a.w(i));
  for (Index i = 0; i < b.size(); ++i) out.add(b.x(i).transpose(), b.y(i), b.w(i));
  // Keep the total exactly additive regardless of summation order.
  out.total_weight_ = a.total_weight() + b.total_weight();
  return out;
}

DataFormat parse_format(const std::string& name) {
  if (name == "sparse-text" || name == "sparse") return DataFormat::SparseText;
  if (name == "dense-csv" || name == "csv") return DataFormat::DenseCsv;
  throw ValidationError("unknown data format '" + name + "'");
}

namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return s;
}

double parse_double(std::string_view token, std::size_t line) {
  token = trim(token);
  if (!token.empty() && token.front() == '+') token.remove_prefix(1);
  double value = 0.0;
  auto [ptr, ec] = std::from_chars(token.data(), token.data() + token.size(), value);
  if (ec != std::errc() || ptr != token.data() + token.size() || token.empty()) {
    throw ParseError("cannot parse number '" + std::string(token) + "'", line);
  }
  return value;
}

int parse_label(std::string_view token, std::size_t line) {
  double v = parse_double(token, line);
  if (v == 1.0) return 1;
  if (v == -1.0 || v == 0.0) return -1;
  throw ParseError("label must be -1, 0 or +1, got '" + std::string(trim(token)) + "'", line);
}

std::filesystem::path sidecar_path(const std::filesystem::path& path) {
  return std::filesystem::path(path.string() + ".json");
}

struct RawPoint {
  std::vector<std::pair<Index, double>> entries;
  int y;
};

}  // namespace

Dataset load_dataset(const std::filesystem::path& path, DataFormat format) {
  InputDomain domain = InputDomain::Reals;
  auto meta = sidecar_path(path);
  if (std::filesystem::exists(meta)) {
    std::ifstream in(meta);
    auto j = nlohmann::json::parse(in);
    if (j.contains("domain")) domain = parse_domain(j.at("domain").get<std::string>());
  }
  return load_dataset(path, format, domain);
}

Dataset load_dataset(const std::filesystem::path& path, DataFormat format, InputDomain domain) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open data file " + path.string());

  Index declared_dim = -1;
  auto meta = sidecar_path(path);
  if (std::filesystem::exists(meta)) {
    std::ifstream min(meta);
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(min);
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(std::string("malformed sidecar ") + meta.string() + ": " + e.what(), 1);
    }
    if (j.contains("d")) declared_dim = j.at("d").get<Index>();
    if (j.contains("domain")) domain = parse_domain(j.at("domain").get<std::string>());
  }

  std::vector<RawPoint> raw;
  Index inferred_dim = 0;
  std::string text;
  std::size_t line_no = 0;
  while (std::getline(in, text)) {
    ++line_no;
    std::string_view line = trim(text);
    if (line.empty() || line.front() == '#') continue;
    RawPoint p;
    if (format == DataFormat::SparseText) {
      std::size_t pos = line.find_first_of(" \t");
      p.y = parse_label(line.substr(0, pos), line_no);
      while (pos != std::string_view::npos) {
        std::size_t start = line.find_first_not_of(" \t", pos);
        if (start == std::string_view::npos) break;
        pos = line.find_first_of(" \t", start);
        std::string_view tok = line.substr(start, pos == std::string_view::npos ? pos : pos - start);
        std::size_t colon = tok.find(':');
        if (colon == std::string_view::npos) throw ParseError("expected <index>:<value>, got '" + std::string(tok) + "'", line_no);
        double idx = parse_double(tok.substr(0, colon), line_no);
        if (idx < 1 || idx != std::floor(idx)) throw ParseError("feature indices are 1-based integers", line_no);
        double value = parse_double(tok.substr(colon + 1), line_no);
        p.entries.emplace_back(static_cast<Index>(idx) - 1, value);
        inferred_dim = std::max(inferred_dim, static_cast<Index>(idx));
      }
    } else {
      std::vector<double> cells;
      std::size_t start = 0;
      while (true) {
        std::size_t comma = line.find(',', start);
        cells.push_back(parse_double(line.substr(start, comma == std::string_view::npos ? comma : comma - start), line_no));
        if (comma == std::string_view::npos) break;
        start = comma + 1;
      }
      if (cells.size() < 2) throw ParseError("dense rows need at least one feature and a label", line_no);
      double label = cells.back();
      if (label == 1.0) p.y = 1;
      else if (label == -1.0 || label == 0.0) p.y = -1;
      else throw ParseError("label must be -1, 0 or +1", line_no);
      Index dim = static_cast<Index>(cells.size()) - 1;
      if (!raw.empty() && dim != inferred_dim) throw ParseError("inconsistent column count", line_no);
      inferred_dim = dim;
      for (Index j = 0; j < dim; ++j) p.entries.emplace_back(j, cells[static_cast<std::size_t>(j)]);
    }
    raw.push_back(std::move(p));
  }

  Index dim = inferred_dim;
  if (declared_dim >= 0) {
    if (declared_dim < inferred_dim) {
      throw ValidationError("sidecar declares d=" + std::to_string(declared_dim) + " but data uses index " +
                            std::to_string(inferred_dim));
    }
    dim = declared_dim;
  }
  Dataset data(dim, domain);
  data.reserve(static_cast<Index>(raw.size()));
  Vector x(dim);
  for (const auto& p : raw) {
    x.setZero();
    for (auto [j, v] : p.entries) x[j] = v;
    data.add(x, p.y, 1.0);
  }
  data.validate();
  return data;
}

void save_dataset(const Dataset& data, const std::filesystem::path& path, DataFormat format) {
  std::ofstream out(path);
  if (!out) throw ValidationError("cannot write " + path.string());
  for (Index i = 0; i < data.size(); ++i) {
    if (format == DataFormat::SparseText) {
      out << (data.y(i) > 0 ? "+1" : "-1");
      for (Index j = 0; j < data.dim(); ++j) {
        double v = data.x(i)[j];
        if (v != 0.0 || std::signbit(v)) out << ' ' << (j + 1) << ':' << format_double(v);
      }
    } else {
      for (Index j = 0; j < data.dim(); ++j) out << format_double(data.x(i)[j]) << ',';
      out << (data.y(i) > 0 ? "1" : "-1");
    }
    out << '\n';
  }
  std::ofstream meta(sidecar_path(path));
  meta << nlohmann::json{{"d", data.dim()}, {"domain", to_string(data.domain())}}.dump() << '\n';
}

std::pair<Dataset, Dataset> synth_gaussians(std::uint64_t seed, Index n, Index d, double mean_separation,
                                            double class_balance) {
  if (n < 4) throw ValidationError("synth_gaussians needs n >= 4");
  if (d < 1) throw ValidationError("synth_gaussians needs d >= 1");
  if (!(class_balance > 0.0 && class_balance < 1.0)) throw ValidationError("class balance must lie in (0, 1)");

  auto draw = [&](CounterRng rng) {
    Index positives = static_cast<Index>(std::llround(static_cast<double>(n) * class_balance));
    positives = std::clamp<Index>(positives, 1, n - 1);
    std::vector<int> labels(static_cast<std::size_t>(n), -1);
    std::fill(labels.begin(), labels.begin() + positives, 1);
    rng.shuffle(labels);
    Dataset out(d, InputDomain::Reals);
    out.reserve(n);
    Vector x(d);
    for (int y : labels) {
      for (Index j = 0; j < d; ++j) x[j] = rng.normal();
      x[0] += 0.5 * mean_separation * y;
      out.add(x, y, 1.0);
    }
    return out;
  };
  CounterRng root(seed);
  return {draw(root.fork(1)), draw(root.fork(2))};
}

}  // namespace poison
