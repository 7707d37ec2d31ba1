#pragma once

// Line-oriented trajectory text format:
//   # model_id m T seed
//   <trajectory>            one per line
// Token states are integers separated by spaces; real vector states are
// space-separated coordinates with ';' between time steps.

#include "helloc/core.hpp"
#include "helloc/harness.hpp"  // format_double

#include <fstream>
#include <sstream>
#include <string>

namespace helloc {

inline std::string format_trajectories(const TrajectoryDataset& ds) {
    std::ostringstream os;
    os << "# " << ds.model_id << " " << ds.size() << " " << ds.horizon << " " << ds.master_seed
       << "\n";
    for (const auto& z : ds.trajectories) {
        if (z.kind() == Trajectory::Kind::Tokens) {
            for (int t = 0; t < z.horizon(); ++t) {
                if (t) os << ' ';
                os << z.token(t);
            }
        } else {
            for (int t = 0; t < z.horizon(); ++t) {
                if (t) os << ';';
                for (int j = 0; j < z.state_dim(); ++j) {
                    if (j) os << ' ';
                    os << format_double(z.state(t)[j]);
                }
            }
        }
        os << "\n";
    }
    return os.str();
}

inline void write_trajectories(const TrajectoryDataset& ds, const std::string& path) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("write_trajectories: cannot open " + path);
    f << format_trajectories(ds);
    if (!f) throw std::runtime_error("write_trajectories: write failed for " + path);
}

inline TrajectoryDataset read_trajectories(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw std::runtime_error("read_trajectories: cannot open " + path);
    std::string header;
    if (!std::getline(f, header) || header.size() < 2 || header[0] != '#')
        throw std::runtime_error("read_trajectories: missing header in " + path);
    std::istringstream hs(header.substr(1));
    TrajectoryDataset ds;
    int m = 0;
    if (!(hs >> ds.model_id >> m >> ds.horizon >> ds.master_seed))
        throw std::runtime_error("read_trajectories: bad header in " + path);
    std::string line;
    while (std::getline(f, line)) {
        if (line.empty()) continue;
        if (line.find(';') == std::string::npos && line.find('.') == std::string::npos &&
            line.find('e') == std::string::npos) {
            std::istringstream ls(line);
            std::vector<int> tok;
            int v;
            while (ls >> v) tok.push_back(v);
            if (static_cast<int>(tok.size()) != ds.horizon)
                throw std::runtime_error("read_trajectories: wrong horizon on a line");
            ds.trajectories.push_back(Trajectory::tokens(std::move(tok)));
        } else {
            std::vector<std::vector<double>> steps;
            std::size_t start = 0;
            while (start <= line.size()) {
                std::size_t pos = line.find(';', start);
                std::string seg = line.substr(start, pos - start);
                std::istringstream ls(seg);
                std::vector<double> coords;
                double v;
                while (ls >> v) coords.push_back(v);
                steps.push_back(std::move(coords));
                if (pos == std::string::npos) break;
                start = pos + 1;
            }
            if (static_cast<int>(steps.size()) != ds.horizon || steps.empty() ||
                steps[0].empty())
                throw std::runtime_error("read_trajectories: wrong horizon on a line");
            Trajectory z = Trajectory::reals(ds.horizon, static_cast<int>(steps[0].size()));
            for (int t = 0; t < ds.horizon; ++t) {
                if (steps[t].size() != steps[0].size())
                    throw std::runtime_error("read_trajectories: ragged state dimensions");
                for (int j = 0; j < z.state_dim(); ++j) z.state(t)[j] = steps[t][j];
            }
            ds.trajectories.push_back(std::move(z));
        }
    }
    if (ds.size() != m) throw std::runtime_error("read_trajectories: trajectory count mismatch");
    return ds;
}

}  // namespace helloc
