#include "qiv/csv_io.hpp"

#include <charconv>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <map>
#include <set>
#include <sstream>

#include "qiv/error.hpp"

namespace qiv::io {

namespace {

std::vector<std::string> split_line(const std::string& line) {
    std::vector<std::string> out;
    std::size_t start = 0;
    while (true) {
        const std::size_t pos = line.find(',', start);
        out.push_back(line.substr(start, pos == std::string::npos ? std::string::npos : pos - start));
        if (pos == std::string::npos) break;
        start = pos + 1;
    }
    return out;
}

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

[[noreturn]] void cell_error(const std::string& source, std::size_t row, const std::string& column,
                             const std::string& what) {
    std::ostringstream os;
    os << source << ": row " << row << ", column '" << column << "': " << what;
    throw Error(ErrorKind::Data, os.str());
}

double parse_number(const std::string& cell, const std::string& source, std::size_t row, const std::string& column) {
    const std::string s = trim(cell);
    if (s.empty()) cell_error(source, row, column, "missing value");
    double v = 0.0;
    const char* first = s.data();
    if (*first == '+') ++first;
    const auto [ptr, ec] = std::from_chars(first, s.data() + s.size(), v);
    if (ec != std::errc() || ptr != s.data() + s.size()) cell_error(source, row, column, "non-numeric value '" + s + "'");
    if (!std::isfinite(v)) cell_error(source, row, column, "non-finite value '" + s + "'");
    return v;
}

std::string format_double(double v) {
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

void fnv(std::uint64_t& h, const void* data, std::size_t len) {
    const auto* p = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < len; ++i) {
        h ^= p[i];
        h *= 0x100000001b3ULL;
    }
}

}  // namespace

void ColumnRoles::validate() const {
    std::set<std::string> seen;
    auto add = [&seen](const std::string& name, const char* role) {
        if (name.empty()) throw Error(ErrorKind::Config, std::string("empty column name for role ") + role);
        if (!seen.insert(name).second) throw Error(ErrorKind::Config, "column '" + name + "' assigned to more than one role");
    };
    add(outcome, "outcome");
    add(treatment, "treatment");
    if (qivs.empty()) throw Error(ErrorKind::Config, "at least one QIV column is required");
    for (const auto& q : qivs) add(q, "qiv");
    for (const auto& c : covariates) add(c, "covariate");
}

Dataset parse_csv(const std::string& text, const ColumnRoles& roles, const std::string& source) {
    roles.validate();
    std::istringstream in(text);
    std::string line;
    if (!std::getline(in, line) || trim(line).empty()) {
        throw Error(ErrorKind::Data, source + ": missing header line");
    }
    std::vector<std::string> header = split_line(line);
    for (auto& h : header) h = trim(h);
    if (!header.empty() && header[0].rfind("\xEF\xBB\xBF", 0) == 0) header[0] = header[0].substr(3);

    std::map<std::string, std::size_t> index;
    for (std::size_t j = 0; j < header.size(); ++j) {
        if (!index.emplace(header[j], j).second) throw Error(ErrorKind::Data, source + ": duplicate column '" + header[j] + "'");
    }
    auto column = [&](const std::string& name) {
        const auto it = index.find(name);
        if (it == index.end()) throw Error(ErrorKind::Data, source + ": missing column '" + name + "'");
        return it->second;
    };

    std::vector<std::string> covariates = roles.covariates;
    if (covariates.empty()) {
        std::set<std::string> used{roles.outcome, roles.treatment};
        used.insert(roles.qivs.begin(), roles.qivs.end());
        for (const auto& h : header) {
            if (!used.count(h)) covariates.push_back(h);
        }
    }

    const std::size_t jy = column(roles.outcome);
    const std::size_t ja = column(roles.treatment);
    std::vector<std::size_t> jz, jx;
    for (const auto& q : roles.qivs) jz.push_back(column(q));
    for (const auto& c : covariates) jx.push_back(column(c));

    std::vector<double> y, a, z, x;
    std::size_t row = 0;
    while (std::getline(in, line)) {
        if (trim(line).empty()) continue;
        ++row;
        const std::vector<std::string> cells = split_line(line);
        if (cells.size() != header.size()) {
            std::ostringstream os;
            os << source << ": row " << row << " has " << cells.size() << " cells, header has " << header.size();
            throw Error(ErrorKind::Data, os.str());
        }
        auto binary = [&](std::size_t j) {
            const double v = parse_number(cells[j], source, row, header[j]);
            if (v != 0.0 && v != 1.0) cell_error(source, row, header[j], "non-binary value '" + trim(cells[j]) + "'");
            return v;
        };
        y.push_back(binary(jy));
        a.push_back(binary(ja));
        for (std::size_t j : jz) z.push_back(binary(j));
        for (std::size_t j : jx) x.push_back(parse_number(cells[j], source, row, header[j]));
    }
    if (row == 0) throw Error(ErrorKind::Data, source + ": no data rows");

    Dataset d;
    const auto n = static_cast<Eigen::Index>(row);
    const auto m = static_cast<Eigen::Index>(jz.size());
    const auto q = static_cast<Eigen::Index>(jx.size());
    d.y = Eigen::Map<Eigen::VectorXd>(y.data(), n);
    d.a = Eigen::Map<Eigen::VectorXd>(a.data(), n);
    d.z = Eigen::Map<Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(z.data(), n, m);
    d.x = Eigen::Map<Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(x.data(), n, q);
    d.outcome_name = roles.outcome;
    d.treatment_name = roles.treatment;
    d.z_names = roles.qivs;
    d.x_names = covariates;
    return d;
}

Dataset load_csv(const std::string& path, const ColumnRoles& roles) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw Error(ErrorKind::Config, "cannot open input file '" + path + "'");
    std::ostringstream ss;
    ss << f.rdbuf();
    return parse_csv(ss.str(), roles, path);
}

std::string to_csv(const Dataset& d) {
    std::string out = d.outcome_name + "," + d.treatment_name;
    for (const auto& n : d.z_names) out += "," + n;
    for (const auto& n : d.x_names) out += "," + n;
    out += '\n';
    for (Eigen::Index i = 0; i < d.y.size(); ++i) {
        out += format_double(d.y[i]);
        out += ',';
        out += format_double(d.a[i]);
        for (Eigen::Index j = 0; j < d.z.cols(); ++j) {
            out += ',';
            out += format_double(d.z(i, j));
        }
        for (Eigen::Index j = 0; j < d.x.cols(); ++j) {
            out += ',';
            out += format_double(d.x(i, j));
        }
        out += '\n';
    }
    return out;
}

void write_csv(const std::string& path, const Dataset& d) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw Error(ErrorKind::Config, "cannot write '" + path + "'");
    f << to_csv(d);
    if (!f) throw Error(ErrorKind::Config, "write failed for '" + path + "'");
}

std::string Fingerprint::hex() const {
    std::ostringstream os;
    os << std::hex << std::setw(16) << std::setfill('0') << hash;
    return os.str();
}

Fingerprint fingerprint(const Dataset& d) {
    Fingerprint fp;
    fp.rows = d.n();
    fp.columns = 2 + d.z_names.size() + d.x_names.size();
    std::uint64_t h = 0xcbf29ce484222325ULL;
    auto name = [&h](const std::string& s) {
        fnv(h, s.data(), s.size());
        fnv(h, "\0", 1);
    };
    auto values = [&h](const double* p, std::size_t n) { fnv(h, p, n * sizeof(double)); };
    name(d.outcome_name);
    name(d.treatment_name);
    for (const auto& s : d.z_names) name(s);
    for (const auto& s : d.x_names) name(s);
    values(d.y.data(), static_cast<std::size_t>(d.y.size()));
    values(d.a.data(), static_cast<std::size_t>(d.a.size()));
    values(d.z.data(), static_cast<std::size_t>(d.z.size()));
    values(d.x.data(), static_cast<std::size_t>(d.x.size()));
    fp.hash = h;
    return fp;
}

}  // namespace qiv::io
