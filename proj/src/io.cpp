#include "glmmlasso/io.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <locale>
#include <map>
#include <set>
#include <sstream>

#include "glmmlasso/error.hpp"

namespace glmmlasso {

namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(b, e - b + 1));
}

std::vector<std::string> split(std::string_view s, char sep) {
  std::vector<std::string> out;
  std::size_t start = 0;
  for (std::size_t i = 0; i <= s.size(); ++i) {
    if (i == s.size() || s[i] == sep) {
      out.push_back(trim(s.substr(start, i - start)));
      start = i + 1;
    }
  }
  return out;
}

// RFC-4180-ish: quoted fields may contain commas and doubled quotes.
std::vector<std::string> split_csv_line(const std::string& line, const std::string& where) {
  std::vector<std::string> out;
  std::string cur;
  bool quoted = false, was_quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          cur += '"';
          ++i;
        } else {
          quoted = false;
        }
      } else {
        cur += c;
      }
    } else if (c == '"') {
      if (!trim(cur).empty()) throw InvalidInput(where + ": stray quote");
      cur.clear();
      quoted = was_quoted = true;
    } else if (c == ',') {
      out.push_back(was_quoted ? cur : trim(cur));
      cur.clear();
      was_quoted = false;
    } else {
      cur += c;
    }
  }
  if (quoted) throw InvalidInput(where + ": unterminated quote");
  out.push_back(was_quoted ? cur : trim(cur));
  return out;
}

bool parse_bool(const std::string& v, const std::string& key) {
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw InvalidInput("model spec: '" + key + "' expects true/false, got '" + v + "'");
}

std::string lower(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return s;
}

}  // namespace

int CsvTable::column(const std::string& name) const {
  const auto it = std::find(header.begin(), header.end(), name);
  return it == header.end() ? -1 : static_cast<int>(it - header.begin());
}

std::vector<double> CsvTable::numeric(int col) const {
  if (col < 0 || col >= static_cast<int>(header.size())) throw InvalidInput("column index out of range");
  std::vector<double> v(rows.size());
  for (std::size_t r = 0; r < rows.size(); ++r) {
    const std::string& s = rows[r][col];
    double x = 0.0;
    // from_chars is locale-independent; accept a leading '+'
    const char* b = s.data();
    const char* e = s.data() + s.size();
    if (b != e && *b == '+') ++b;
    const auto [ptr, ec] = std::from_chars(b, e, x);
    if (s.empty() || ec != std::errc() || ptr != e)
      throw InvalidInput("row " + std::to_string(r + 1) + ", column '" + header[col] + "': not a number: '" + s + "'");
    if (!std::isfinite(x))
      throw InvalidInput("row " + std::to_string(r + 1) + ", column '" + header[col] + "': non-finite value");
    v[r] = x;
  }
  return v;
}

CsvTable read_csv(std::istream& in, const std::string& source) {
  CsvTable t;
  std::string line;
  int lineno = 0;
  bool have_header = false;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (trim(line).empty()) continue;
    const std::string where = source + ":" + std::to_string(lineno);
    auto cells = split_csv_line(line, where);
    if (!have_header) {
      t.header = std::move(cells);
      std::set<std::string> seen;
      for (const auto& h : t.header) {
        if (h.empty()) throw InvalidInput(where + ": empty column name in header");
        if (!seen.insert(h).second) throw InvalidInput(where + ": duplicate column '" + h + "'");
      }
      have_header = true;
      continue;
    }
    if (cells.size() != t.header.size())
      throw InvalidInput(where + " (row " + std::to_string(t.rows.size() + 1) + "): expected " +
                         std::to_string(t.header.size()) + " fields, found " + std::to_string(cells.size()));
    t.rows.push_back(std::move(cells));
  }
  if (!have_header) throw InvalidInput(source + ": empty file");
  if (t.rows.empty()) throw InvalidInput(source + ": no data rows");
  return t;
}

CsvTable read_csv_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InvalidInput("cannot open '" + path + "'");
  return read_csv(in, path);
}

ModelSpec parse_model_spec(const std::string& text) {
  ModelSpec s;
  std::set<std::string> seen;
  std::string body;
  // '#' starts a comment; newlines and ';' both end a statement
  for (const auto& raw : split(text, '\n')) {
    const auto hash = raw.find('#');
    body += (hash == std::string::npos ? raw : raw.substr(0, hash)) + ";";
  }
  for (const auto& stmt : split(body, ';')) {
    if (stmt.empty()) continue;
    const auto eq = stmt.find('=');
    if (eq == std::string::npos) throw InvalidInput("model spec: expected 'key = value', got '" + stmt + "'");
    const std::string key = lower(trim(std::string_view(stmt).substr(0, eq)));
    const std::string val = trim(std::string_view(stmt).substr(eq + 1));
    if (!seen.insert(key).second) throw InvalidInput("model spec: duplicate key '" + key + "'");
    auto list = [&] {
      std::vector<std::string> v;
      for (auto& x : split(val, ','))
        if (!x.empty()) v.push_back(x);
      return v;
    };
    if (key == "response") {
      s.response = val;
    } else if (key == "groups") {
      s.groups = list();
    } else if (key == "covariates") {
      s.covariates = list();
    } else if (key == "unpenalized") {
      s.unpenalized = list();
    } else if (key == "family") {
      s.family = lower(val);
    } else if (key == "phi") {
      double x = 0.0;
      const auto [p, ec] = std::from_chars(val.data(), val.data() + val.size(), x);
      if (ec != std::errc() || p != val.data() + val.size() || !(x > 0.0) || !std::isfinite(x))
        throw InvalidInput("model spec: phi must be a positive number");
      s.phi = x;
    } else if (key == "intercept") {
      s.intercept = parse_bool(lower(val), key);
    } else if (key == "standardize") {
      s.standardize = parse_bool(lower(val), key);
    } else if (key == "random") {
      for (const auto& term : list()) {
        RandomTerm rt;
        std::string t = term;
        const auto colon = t.find(':');
        if (colon != std::string::npos) {
          rt.structure = cov_structure_from_name(lower(trim(std::string_view(t).substr(colon + 1))));
          t = t.substr(0, colon);
        }
        const auto at = t.find('@');
        if (at == std::string::npos) throw InvalidInput("model spec: random term '" + term + "' lacks '@ group'");
        rt.group = trim(std::string_view(t).substr(at + 1));
        for (auto& v : split(std::string_view(t).substr(0, at), '+'))
          if (!v.empty()) rt.variables.push_back(lower(v) == "intercept" || v == "1" ? "intercept" : v);
        if (rt.variables.empty() || rt.group.empty())
          throw InvalidInput("model spec: malformed random term '" + term + "'");
        if (colon == std::string::npos)
          rt.structure = rt.variables.size() == 1 ? CovStructure::scalar_identity : CovStructure::diagonal;
        s.random.push_back(std::move(rt));
      }
    } else {
      throw InvalidInput("model spec: unknown key '" + key + "'");
    }
  }
  if (s.response.empty()) throw InvalidInput("model spec: 'response' is required");
  if (s.random.empty()) throw InvalidInput("model spec: at least one random term is required");
  for (const auto& rt : s.random)
    if (std::find(s.groups.begin(), s.groups.end(), rt.group) == s.groups.end()) {
      if (!seen.count("groups")) s.groups.push_back(rt.group);
      else throw InvalidInput("model spec: random term uses undeclared group '" + rt.group + "'");
    }
  return s;
}

ModelSpec read_model_spec_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InvalidInput("cannot open '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_model_spec(ss.str());
}

FamilySpec family_from_spec(const ModelSpec& spec) {
  FamilySpec f = family_from_name(spec.family);
  if (spec.phi) {
    if (f.kind != FamilyKind::gaussian_identity) throw InvalidInput("phi can only be fixed for the gaussian family");
    f = FamilySpec::gaussian(true, *spec.phi);
  }
  return f;
}

LoadedModel build_model(const CsvTable& table, const ModelSpec& spec) {
  LoadedModel m;
  m.family = family_from_spec(spec);
  auto need = [&](const std::string& name) {
    const int c = table.column(name);
    if (c < 0) throw InvalidInput("column '" + name + "' not found in data");
    return c;
  };
  const int ycol = need(spec.response);
  std::vector<std::string> covs = spec.covariates;
  if (covs.empty()) {
    for (const auto& h : table.header) {
      if (h == spec.response) continue;
      if (std::find(spec.groups.begin(), spec.groups.end(), h) != spec.groups.end()) continue;
      covs.push_back(h);
    }
  }
  for (const auto& c : covs) {
    if (c == spec.response) throw InvalidInput("response '" + c + "' listed as a covariate");
    if (lower(c) == "intercept") throw InvalidInput("'intercept' is reserved; use intercept = true");
  }
  const int n = static_cast<int>(table.rows.size());
  const int p = static_cast<int>(covs.size()) + (spec.intercept ? 1 : 0);
  if (p == 0) throw InvalidInput("model has no fixed effects");
  Dataset& d = m.data;
  const auto y = table.numeric(ycol);
  d.y = Eigen::Map<const VectorXd>(y.data(), n);
  d.X.resize(n, p);
  d.has_intercept = spec.intercept;
  int j = 0;
  if (spec.intercept) {
    d.X.col(j++).setOnes();
    d.column_names.push_back("(Intercept)");
  }
  for (const auto& c : covs) {
    const auto v = table.numeric(need(c));
    d.X.col(j++) = Eigen::Map<const VectorXd>(v.data(), n);
    d.column_names.push_back(c);
  }
  for (const auto& g : spec.groups) {
    const int c = need(g);
    std::vector<std::string> labels(n);
    for (int r = 0; r < n; ++r) labels[r] = table.rows[r][c];
    d.groups.push_back(GroupingFactor::from_labels(g, labels));
  }
  for (const auto& rt : spec.random) {
    RandomBlock b;
    b.factor = d.factor_index(rt.group);
    b.structure = rt.structure;
    for (const auto& v : rt.variables) {
      if (v == "intercept") {
        b.columns.push_back(kInterceptColumn);
        continue;
      }
      const int col = d.column_index(v);
      if (col < 0) throw InvalidInput("random-effect variable '" + v + "' is not a fixed-effect covariate");
      b.columns.push_back(col);
    }
    m.cov.blocks.push_back(std::move(b));
  }
  d.validate();
  m.cov.validate(d);
  m.penalty_mask = default_penalty_mask(d, m.cov);
  for (const auto& u : spec.unpenalized) {
    const int col = d.column_index(u);
    if (col < 0) throw InvalidInput("unpenalized column '" + u + "' not found");
    m.penalty_mask[col] = false;
  }
  if (spec.standardize) {
    m.standardization = Standardization::compute(d);
    // columns carrying a random effect keep their scale so theta stays interpretable
    for (int k = 0; k < d.p(); ++k)
      if (!m.penalty_mask[k]) {
        m.standardization.center[k] = 0.0;
        m.standardization.scale[k] = 1.0;
      }
    m.standardization.apply(d);
  }
  return m;
}

CsvTable epilepsy_table(const CsvTable& raw) {
  const char* needed[] = {"subject", "visit", "count", "Base", "Trt", "Age"};
  std::map<std::string, int> col;
  for (const char* nm : needed) {
    const int c = raw.column(nm);
    if (c < 0) throw InvalidInput(std::string("epilepsy data: missing column '") + nm + "'");
    col[nm] = c;
  }
  const auto visit = raw.numeric(col["visit"]);
  (void)raw.numeric(col["count"]);  // validates the cells
  const auto base = raw.numeric(col["Base"]);
  const auto trt = raw.numeric(col["Trt"]);
  const auto age = raw.numeric(col["Age"]);
  std::map<std::string, std::set<int>> visits;
  CsvTable t;
  t.header = {"subject", "obs", "count", "lBase", "Trt", "lBase_Trt", "lAge", "V4"};
  auto num = [](double x) {
    std::ostringstream o;
    o.imbue(std::locale::classic());
    o.precision(17);
    o << x;
    return o.str();
  };
  for (std::size_t r = 0; r < raw.rows.size(); ++r) {
    const std::string row = "row " + std::to_string(r + 1);
    const std::string& subj = raw.rows[r][col["subject"]];
    const int v = static_cast<int>(visit[r]);
    if (v != visit[r] || v < 1 || v > 4) throw InvalidInput("epilepsy data " + row + ": visit must be 1..4");
    if (!visits[subj].insert(v).second) throw InvalidInput("epilepsy data " + row + ": repeated visit");
    if (!(base[r] > 0.0) || !(age[r] > 0.0)) throw InvalidInput("epilepsy data " + row + ": Base and Age must be positive");
    if (trt[r] != 0.0 && trt[r] != 1.0) throw InvalidInput("epilepsy data " + row + ": Trt must be 0 or 1");
    const double lb = std::log(base[r] / 4.0);
    t.rows.push_back({subj, subj + "/" + std::to_string(v), raw.rows[r][col["count"]], num(lb), num(trt[r]),
                      num(lb * trt[r]), num(std::log(age[r])), v == 4 ? "1" : "0"});
  }
  for (const auto& [s, v] : visits)
    if (v.size() != 4) throw InvalidInput("epilepsy data: subject '" + s + "' does not have 4 visits");
  return t;
}

ModelSpec epilepsy_spec() {
  return parse_model_spec(
      "response = count; groups = subject, obs;"
      "covariates = lBase, Trt, lBase_Trt, lAge, V4;"
      "random = intercept @ subject, intercept @ obs; family = poisson");
}

}  // namespace glmmlasso
