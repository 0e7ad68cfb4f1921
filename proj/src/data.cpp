#include "proxydebias/data.hpp"

#include <charconv>
#include <fstream>
#include <sstream>
#include <string>
#include <string_view>
#include <system_error>

#include "proxydebias/random.hpp"

namespace proxydebias {

Index GeneratorConfig::feature_dim() const {
  Index d = dim_target + dim_noise;
  for (Index b : dim_bias) d += b;
  return d;
}

void GeneratorConfig::validate() const {
  if (n_samples <= 0) throw ConfigError("data: n_samples must be positive");
  if (dim_target < 0 || dim_noise < 0) throw ConfigError("data: block dims must be non-negative");
  if (dim_bias.empty()) throw ConfigError("data: at least one bias attribute is required");
  if (sep_bias.size() != dim_bias.size() || rho.size() != dim_bias.size()) {
    throw ConfigError("data: dim_bias, sep_bias and rho must have one entry per bias attribute");
  }
  for (Index b : dim_bias) {
    if (b < 0) throw ConfigError("data: block dims must be non-negative");
  }
  for (double r : rho) {
    if (!(r >= 0.0 && r <= 1.0)) throw ConfigError("data: rho entries must lie in [0, 1]");
  }
  if (!(noise_sigma > 0.0)) throw ConfigError("data: noise_sigma must be positive");
  if (feature_dim() <= 0) throw ConfigError("data: total feature dim must be positive");
}

namespace {

void draw_features(Engine& rng, const GeneratorConfig& cfg, int t, const int* b,
                   Eigen::Ref<RowVector> out) {
  std::normal_distribution<double> normal(0.0, cfg.noise_sigma);
  Index col = 0;
  const double target_mean = (2.0 * t - 1.0) * cfg.sep_target / 2.0;
  for (Index i = 0; i < cfg.dim_target; ++i) out(col++) = target_mean + normal(rng);
  for (std::size_t k = 0; k < cfg.num_attributes(); ++k) {
    const double mean = (2.0 * b[k] - 1.0) * cfg.sep_bias[k] / 2.0;
    for (Index i = 0; i < cfg.dim_bias[k]; ++i) out(col++) = mean + normal(rng);
  }
  for (Index i = 0; i < cfg.dim_noise; ++i) out(col++) = normal(rng);
}

Dataset allocate(const GeneratorConfig& cfg) {
  Dataset ds;
  ds.features.resize(cfg.n_samples, cfg.feature_dim());
  ds.targets.resize(static_cast<std::size_t>(cfg.n_samples));
  ds.bias_labels.resize(cfg.n_samples, static_cast<Index>(cfg.num_attributes()));
  ds.provenance = cfg;
  return ds;
}

}  // namespace

Dataset generate(const GeneratorConfig& config) {
  config.validate();
  Engine rng = make_engine(config.seed, Stream::train_data);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  Dataset ds = allocate(config);
  for (Index i = 0; i < config.n_samples; ++i) {
    const int t = unit(rng) < 0.5 ? 0 : 1;
    ds.targets[static_cast<std::size_t>(i)] = t;
    for (std::size_t k = 0; k < config.num_attributes(); ++k) {
      ds.bias_labels(i, static_cast<Index>(k)) = unit(rng) < config.rho[k] ? t : 1 - t;
    }
    RowVector row(config.feature_dim());
    draw_features(rng, config, t, ds.bias_labels.row(i).data(), row);
    ds.features.row(i) = row;
  }
  return ds;
}

Dataset balanced_test(const GeneratorConfig& config) {
  config.validate();
  const std::size_t k_attrs = config.num_attributes();
  const Index cells = Index{2} << k_attrs;
  if (config.n_samples % cells != 0) {
    throw ConfigError("balanced_test: n_samples " + std::to_string(config.n_samples) +
                      " is not divisible by the " + std::to_string(cells) + " (t, b) cells");
  }
  const Index per_cell = config.n_samples / cells;
  Engine rng = make_engine(config.seed, Stream::test_data);
  Dataset ds = allocate(config);
  Index i = 0;
  // Cell index bits: lowest is t, then b_0, b_1, ...
  for (Index cell = 0; cell < cells; ++cell) {
    const int t = static_cast<int>(cell & 1);
    for (Index n = 0; n < per_cell; ++n, ++i) {
      ds.targets[static_cast<std::size_t>(i)] = t;
      for (std::size_t k = 0; k < k_attrs; ++k) {
        ds.bias_labels(i, static_cast<Index>(k)) = static_cast<int>((cell >> (k + 1)) & 1);
      }
      RowVector row(config.feature_dim());
      draw_features(rng, config, t, ds.bias_labels.row(i).data(), row);
      ds.features.row(i) = row;
    }
  }
  return ds;
}

double empirical_correlation(const Dataset& ds, std::size_t k) {
  if (k >= ds.num_attributes()) {
    throw IndexError("empirical_correlation: attribute " + std::to_string(k) + " of " +
                     std::to_string(ds.num_attributes()));
  }
  if (ds.size() == 0) throw ContractError("empirical_correlation: empty dataset");
  Index agree = 0;
  for (Index i = 0; i < ds.size(); ++i) {
    agree += ds.bias_labels(i, static_cast<Index>(k)) == ds.targets[static_cast<std::size_t>(i)];
  }
  return static_cast<double>(agree) / static_cast<double>(ds.size());
}

Dataset Dataset::subset(std::span<const Index> rows) const {
  Dataset out;
  out.features.resize(static_cast<Index>(rows.size()), feature_dim());
  out.bias_labels.resize(static_cast<Index>(rows.size()), bias_labels.cols());
  out.targets.reserve(rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const Index r = rows[i];
    out.features.row(static_cast<Index>(i)) = features.row(r);
    out.bias_labels.row(static_cast<Index>(i)) = bias_labels.row(r);
    out.targets.push_back(targets[static_cast<std::size_t>(r)]);
  }
  out.provenance = provenance;
  return out;
}

Dataset Dataset::with_attributes(std::span<const Index> attributes) const {
  Dataset out;
  out.features = features;
  out.targets = targets;
  out.bias_labels.resize(size(), static_cast<Index>(attributes.size()));
  for (std::size_t j = 0; j < attributes.size(); ++j) {
    if (attributes[j] < 0 || attributes[j] >= bias_labels.cols()) {
      throw IndexError("with_attributes: attribute " + std::to_string(attributes[j]) + " of " +
                       std::to_string(bias_labels.cols()));
    }
    out.bias_labels.col(static_cast<Index>(j)) = bias_labels.col(attributes[j]);
  }
  return out;
}

std::vector<int> Dataset::attribute_column(std::size_t k) const {
  std::vector<int> out(static_cast<std::size_t>(size()));
  for (Index i = 0; i < size(); ++i) out[static_cast<std::size_t>(i)] = bias_labels(i, static_cast<Index>(k));
  return out;
}

void Dataset::validate() const {
  if (static_cast<Index>(targets.size()) != features.rows() || bias_labels.rows() != features.rows()) {
    throw ShapeError("dataset: row counts of features, targets and bias labels differ");
  }
  for (int t : targets) {
    if (t < 0) throw IndexError("dataset: negative target label");
  }
  if ((bias_labels.array() < 0).any()) throw IndexError("dataset: negative bias label");
}

bool operator==(const Dataset& a, const Dataset& b) {
  return a.features.rows() == b.features.rows() && a.features.cols() == b.features.cols() &&
         a.features == b.features && a.targets == b.targets &&
         a.bias_labels.cols() == b.bias_labels.cols() && a.bias_labels == b.bias_labels;
}

// ---------------------------------------------------------------------------
// CSV

namespace {

std::string format_double(double v) {
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  if (ec != std::errc{}) throw NumericError("cannot format value");
  return std::string(buf, end);
}

std::vector<std::string_view> split(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t comma = line.find(',', start);
    out.push_back(line.substr(start, comma - start));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return out;
}

std::string expected_header(std::size_t attrs, Index dims) {
  std::string h = "t";
  for (std::size_t k = 0; k < attrs; ++k) h += ",b" + std::to_string(k);
  for (Index j = 0; j < dims; ++j) h += ",f" + std::to_string(j);
  return h;
}

template <typename T>
T parse_number(std::string_view field, std::size_t line, const char* what) {
  T value{};
  auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), value);
  if (ec != std::errc{} || ptr != field.data() + field.size() || field.empty()) {
    throw ParseError("malformed " + std::string(what) + " '" + std::string(field) + "'", line);
  }
  return value;
}

}  // namespace

void save_csv(const Dataset& ds, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  out << expected_header(ds.num_attributes(), ds.feature_dim()) << '\n';
  for (Index i = 0; i < ds.size(); ++i) {
    out << ds.targets[static_cast<std::size_t>(i)];
    for (Index k = 0; k < ds.bias_labels.cols(); ++k) out << ',' << ds.bias_labels(i, k);
    for (Index j = 0; j < ds.feature_dim(); ++j) out << ',' << format_double(ds.features(i, j));
    out << '\n';
  }
  if (!out) throw std::runtime_error("write failed for " + path.string());
}

Dataset load_csv(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::string header;
  if (!std::getline(in, header) || header.empty()) throw ParseError("empty file, expected header", 1);
  if (!header.empty() && header.back() == '\r') header.pop_back();

  const auto cols = split(header);
  std::size_t attrs = 0;
  while (1 + attrs < cols.size() && !cols[1 + attrs].empty() && cols[1 + attrs][0] == 'b') ++attrs;
  const Index dims = static_cast<Index>(cols.size() - 1 - attrs);
  if (cols.empty() || cols[0] != "t" || attrs == 0 || header != expected_header(attrs, dims)) {
    throw ParseError("header does not match 't,b0[,...],f0,...'", 1);
  }

  std::vector<double> values;
  std::vector<int> targets;
  std::vector<int> bias;
  std::string line;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto fields = split(line);
    if (fields.size() != cols.size()) {
      throw ParseError("expected " + std::to_string(cols.size()) + " columns, got " +
                       std::to_string(fields.size()), line_no);
    }
    const int t = parse_number<int>(fields[0], line_no, "target label");
    if (t < 0) throw ParseError("target label out of range", line_no);
    targets.push_back(t);
    for (std::size_t k = 0; k < attrs; ++k) {
      const int b = parse_number<int>(fields[1 + k], line_no, "bias label");
      if (b < 0) throw ParseError("bias label out of range", line_no);
      bias.push_back(b);
    }
    for (std::size_t j = 1 + attrs; j < fields.size(); ++j) {
      values.push_back(parse_number<double>(fields[j], line_no, "feature"));
    }
  }
  if (targets.empty()) throw ParseError("no data rows", line_no);

  Dataset ds;
  const Index n = static_cast<Index>(targets.size());
  ds.features = Eigen::Map<const Matrix>(values.data(), n, dims);
  ds.targets = std::move(targets);
  ds.bias_labels = Eigen::Map<const LabelMatrix>(bias.data(), n, static_cast<Index>(attrs));
  return ds;
}

}  // namespace proxydebias
