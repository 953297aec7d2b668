#ifndef CBBO_DATASET_HPP
#define CBBO_DATASET_HPP

#include <cstddef>
#include <fstream>
#include <iomanip>
#include <limits>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include <cbbo/common.hpp>

namespace cbbo {

/// Evaluated inputs paired with one measurement per constraint.
class Dataset {
public:
    Dataset() = default;
    Dataset(std::size_t dims, std::size_t constraint_count, bool allow_duplicates = false)
        : dims_(dims), observations_(constraint_count), allow_duplicates_(allow_duplicates)
    {
        if (dims == 0)
            throw Error(ErrorKind::invalid_argument, "dataset needs at least one input dimension");
    }

    std::size_t dims() const noexcept { return dims_; }
    std::size_t constraint_count() const noexcept { return observations_.size(); }
    std::size_t size() const noexcept { return inputs_.size(); }
    bool empty() const noexcept { return inputs_.empty(); }
    bool allows_duplicates() const noexcept { return allow_duplicates_; }

    const Vector& input(std::size_t i) const { return inputs_.at(i); }
    const std::vector<Vector>& inputs() const noexcept { return inputs_; }
    const std::vector<double>& observations(std::size_t k) const { return observations_.at(k); }
    double observation(std::size_t k, std::size_t i) const { return observations_.at(k).at(i); }

    std::vector<double> measurements(std::size_t i) const
    {
        std::vector<double> out(constraint_count());
        for (std::size_t k = 0; k < out.size(); ++k)
            out[k] = observations_[k].at(i);
        return out;
    }

    bool contains(const Vector& x) const
    {
        for (const auto& xi : inputs_)
            if (xi.size() == x.size() && (xi.array() == x.array()).all())
                return true;
        return false;
    }

    void add(const Vector& x, std::span<const double> y)
    {
        if (static_cast<std::size_t>(x.size()) != dims_)
            throw Error(ErrorKind::dimension_mismatch, "input has " + std::to_string(x.size()) + " entries, dataset has " + std::to_string(dims_));
        if (y.size() != constraint_count())
            throw Error(ErrorKind::dimension_mismatch, "expected " + std::to_string(constraint_count()) + " measurements, got " + std::to_string(y.size()));
        if (!allow_duplicates_ && contains(x))
            throw Error(ErrorKind::invalid_argument, "duplicate input vector");
        inputs_.push_back(x);
        for (std::size_t k = 0; k < y.size(); ++k)
            observations_[k].push_back(y[k]);
    }

    void add(const Vector& x, std::initializer_list<double> y) { add(x, std::span<const double>(y.begin(), y.size())); }

    /// Removes the trailing `count` entries.
    void truncate(std::size_t count)
    {
        if (count > size())
            throw Error(ErrorKind::invalid_argument, "truncate past dataset start");
        inputs_.resize(inputs_.size() - count);
        for (auto& obs : observations_)
            obs.resize(obs.size() - count);
    }

    /// Inputs as an n x d matrix.
    Matrix input_matrix() const
    {
        Matrix out(static_cast<Eigen::Index>(size()), static_cast<Eigen::Index>(dims_));
        for (std::size_t i = 0; i < size(); ++i)
            out.row(static_cast<Eigen::Index>(i)) = inputs_[i].transpose();
        return out;
    }

    Vector observation_vector(std::size_t k) const
    {
        const auto& obs = observations_.at(k);
        return Eigen::Map<const Vector>(obs.data(), static_cast<Eigen::Index>(obs.size()));
    }

    friend bool operator==(const Dataset& a, const Dataset& b)
    {
        if (a.dims_ != b.dims_ || a.observations_ != b.observations_ || a.inputs_.size() != b.inputs_.size())
            return false;
        for (std::size_t i = 0; i < a.inputs_.size(); ++i)
            if ((a.inputs_[i].array() != b.inputs_[i].array()).any())
                return false;
        return true;
    }

private:
    std::size_t dims_ = 1;
    std::vector<Vector> inputs_;
    std::vector<std::vector<double>> observations_;
    bool allow_duplicates_ = false;
};

namespace csv {

    inline std::vector<std::string> split(const std::string& line, char sep = ',')
    {
        std::vector<std::string> out;
        std::string cell;
        std::istringstream in(line);
        while (std::getline(in, cell, sep)) {
            while (!cell.empty() && (cell.back() == '\r' || cell.back() == ' '))
                cell.pop_back();
            std::size_t start = cell.find_first_not_of(' ');
            out.push_back(start == std::string::npos ? std::string() : cell.substr(start));
        }
        if (!line.empty() && line.back() == sep)
            out.emplace_back();
        return out;
    }

    inline double parse_double(const std::string& s)
    {
        std::size_t used = 0;
        double v = 0;
        try {
            v = std::stod(s, &used);
        }
        catch (const std::exception&) {
            throw Error(ErrorKind::io, "not a number: '" + s + "'");
        }
        if (used != s.size())
            throw Error(ErrorKind::io, "not a number: '" + s + "'");
        return v;
    }

    /// Full round-trip precision, '.' decimal separator regardless of locale.
    inline std::string format_double(double v)
    {
        std::ostringstream os;
        os.imbue(std::locale::classic());
        os << std::setprecision(std::numeric_limits<double>::max_digits10) << v;
        return os.str();
    }

} // namespace csv

/// Writes `x1,...,xn,c1,...,cK` followed by one row per point.
inline void write_csv(std::ostream& out, const Dataset& data)
{
    for (std::size_t j = 0; j < data.dims(); ++j)
        out << (j ? "," : "") << 'x' << j + 1;
    for (std::size_t k = 0; k < data.constraint_count(); ++k)
        out << ",c" << k + 1;
    out << '\n';
    for (std::size_t i = 0; i < data.size(); ++i) {
        for (std::size_t j = 0; j < data.dims(); ++j)
            out << (j ? "," : "") << csv::format_double(data.input(i)(static_cast<Eigen::Index>(j)));
        for (std::size_t k = 0; k < data.constraint_count(); ++k)
            out << ',' << csv::format_double(data.observation(k, i));
        out << '\n';
    }
}

inline Dataset read_csv(std::istream& in, bool allow_duplicates = false)
{
    std::string line;
    if (!std::getline(in, line))
        throw Error(ErrorKind::io, "empty CSV");
    if (line.size() >= 3 && static_cast<unsigned char>(line[0]) == 0xEF)
        line.erase(0, 3); // UTF-8 BOM
    const auto header = csv::split(line);
    std::size_t dims = 0, cons = 0;
    for (const auto& h : header) {
        if (!h.empty() && h[0] == 'x') {
            if (cons != 0)
                throw Error(ErrorKind::io, "input column after constraint column: " + h);
            ++dims;
        }
        else if (!h.empty() && h[0] == 'c')
            ++cons;
        else
            throw Error(ErrorKind::io, "unexpected CSV header column '" + h + "'");
    }
    Dataset data(dims, cons, allow_duplicates);
    std::vector<double> y(cons);
    while (std::getline(in, line)) {
        if (line.empty() || line == "\r")
            continue;
        const auto cells = csv::split(line);
        if (cells.size() != dims + cons)
            throw Error(ErrorKind::io, "row has " + std::to_string(cells.size()) + " cells, header has " + std::to_string(dims + cons));
        Vector x(static_cast<Eigen::Index>(dims));
        for (std::size_t j = 0; j < dims; ++j)
            x(static_cast<Eigen::Index>(j)) = csv::parse_double(cells[j]);
        for (std::size_t k = 0; k < cons; ++k)
            y[k] = csv::parse_double(cells[dims + k]);
        data.add(x, y);
    }
    return data;
}

inline Dataset read_csv_file(const std::string& path, bool allow_duplicates = false)
{
    std::ifstream in(path);
    if (!in)
        throw Error(ErrorKind::io, "cannot open " + path);
    return read_csv(in, allow_duplicates);
}

inline void write_csv_file(const std::string& path, const Dataset& data)
{
    std::ofstream out(path);
    if (!out)
        throw Error(ErrorKind::io, "cannot write " + path);
    write_csv(out, data);
}

} // namespace cbbo

#endif
