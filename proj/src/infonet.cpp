#include "hloblab/infonet.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>

namespace hloblab::infonet {

namespace {

int cardinality(std::span<const std::int32_t> x) {
    std::int32_t hi = -1;
    for (auto v : x) {
        if (v < 0) {
            throw Error(ErrorCode::InvalidArgument, "negative bin index");
        }
        hi = std::max(hi, v);
    }
    return hi + 1;
}

void check_weights(const Eigen::MatrixXd& w) {
    if (w.rows() != w.cols()) {
        throw Error(ErrorCode::AsymmetricInput, "weight matrix is not square");
    }
    if (w.rows() < 4) {
        throw Error(ErrorCode::TooFewVertices, "a TMFG needs at least 4 vertices, got " + std::to_string(w.rows()));
    }
    for (Eigen::Index i = 0; i < w.rows(); ++i) {
        for (Eigen::Index j = i + 1; j < w.cols(); ++j) {
            if (!(w(i, j) == w(j, i))) {
                throw Error(ErrorCode::AsymmetricInput,
                            "W(" + std::to_string(i) + "," + std::to_string(j) + ") != W(" + std::to_string(j) + "," +
                                std::to_string(i) + ")");
            }
        }
    }
}

std::array<int, 3> sorted3(int a, int b, int c) {
    std::array<int, 3> f{a, b, c};
    std::sort(f.begin(), f.end());
    return f;
}

}  // namespace

lob::Volume vertex_volume(const lob::LobSnapshot& snap, std::size_t v) {
    return v < lob::kLevels ? snap.ask_volumes[v] : snap.bid_volumes[v - lob::kLevels];
}

BinnedVolumes bin_volumes(const lob::LobSeries& day, int n_bins, Diagnostics* diagnostics) {
    if (n_bins < 2) {
        throw Error(ErrorCode::InvalidArgument, "n_bins must be >= 2");
    }
    if (day.empty()) {
        throw Error(ErrorCode::EmptyDataset, "cannot bin an empty day");
    }
    BinnedVolumes out;
    out.rows = day.size();
    out.n_bins = n_bins;
    out.indices.assign(out.rows * kVertices, 0);
    out.min_volume = std::numeric_limits<lob::Volume>::max();
    out.max_volume = std::numeric_limits<lob::Volume>::min();
    for (const auto& snap : day.snapshots) {
        for (std::size_t v = 0; v < kVertices; ++v) {
            out.min_volume = std::min(out.min_volume, vertex_volume(snap, v));
            out.max_volume = std::max(out.max_volume, vertex_volume(snap, v));
        }
    }
    const lob::Volume range = out.max_volume - out.min_volume;
    if (range == 0) {
        report(diagnostics, ErrorCode::DegenerateRange, 0,
               "all volumes equal " + std::to_string(out.min_volume) + "; single bin assigned");
        out.bin_width = 1.0;
        return out;
    }
    out.bin_width = static_cast<double>(range) / n_bins;
    for (std::size_t v = 0; v < kVertices; ++v) {
        for (std::size_t t = 0; t < out.rows; ++t) {
            // floor((x - min) / width) evaluated exactly in integers
            const auto offset = static_cast<__int128>(vertex_volume(day.snapshots[t], v) - out.min_volume);
            auto index = static_cast<std::int32_t>(offset * n_bins / range);
            out.indices[v * out.rows + t] = std::min(index, n_bins - 1);
        }
    }
    return out;
}

double entropy(std::span<const std::int32_t> x) {
    if (x.empty()) {
        throw Error(ErrorCode::LengthMismatch, "entropy of an empty column");
    }
    std::vector<std::int64_t> counts(static_cast<std::size_t>(cardinality(x)), 0);
    for (auto v : x) {
        ++counts[static_cast<std::size_t>(v)];
    }
    const auto n = static_cast<double>(x.size());
    double h = 0.0;
    for (auto c : counts) {
        if (c > 0) {
            const auto nc = static_cast<double>(c);
            h += (nc / n) * std::log(n / nc);
        }
    }
    return h;
}

double mutual_information(std::span<const std::int32_t> x, std::span<const std::int32_t> y) {
    if (x.size() != y.size()) {
        throw Error(ErrorCode::LengthMismatch,
                    "columns of length " + std::to_string(x.size()) + " and " + std::to_string(y.size()));
    }
    if (x.empty()) {
        throw Error(ErrorCode::LengthMismatch, "mutual information of empty columns");
    }
    const auto kx = static_cast<std::size_t>(cardinality(x));
    const auto ky = static_cast<std::size_t>(cardinality(y));
    std::vector<std::int64_t> joint(kx * ky, 0);
    std::vector<std::int64_t> px(kx, 0);
    std::vector<std::int64_t> py(ky, 0);
    for (std::size_t t = 0; t < x.size(); ++t) {
        const auto a = static_cast<std::size_t>(x[t]);
        const auto b = static_cast<std::size_t>(y[t]);
        ++joint[a * ky + b];
        ++px[a];
        ++py[b];
    }
    const auto n = static_cast<double>(x.size());
    double mi = 0.0;
    for (std::size_t a = 0; a < kx; ++a) {
        for (std::size_t b = 0; b < ky; ++b) {
            const auto c = joint[a * ky + b];
            if (c == 0) {
                continue;
            }
            // Products stay far below 2^53, so numerator and denominator are exact.
            const double ratio = (static_cast<double>(c) * n) / (static_cast<double>(px[a]) * static_cast<double>(py[b]));
            mi += (static_cast<double>(c) / n) * std::log(ratio);
        }
    }
    return mi;
}

MiMatrix mi_matrix(const BinnedVolumes& binned) {
    MiMatrix m(static_cast<Eigen::Index>(kVertices), static_cast<Eigen::Index>(kVertices));
    for (std::size_t i = 0; i < kVertices; ++i) {
        m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(i)) = entropy(binned.column(i));
        for (std::size_t j = i + 1; j < kVertices; ++j) {
            const double v = mutual_information(binned.column(i), binned.column(j));
            m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = v;
            m(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(i)) = v;
        }
    }
    return m;
}

std::vector<MiMatrix> bootstrap_mi(const BinnedVolumes& binned, std::size_t replicates, std::uint64_t rng_seed) {
    if (replicates < 1) {
        throw Error(ErrorCode::InvalidArgument, "bootstrap needs at least one replicate");
    }
    if (binned.rows == 0) {
        throw Error(ErrorCode::EmptyDataset, "no rows to resample");
    }
    std::mt19937_64 rng(rng_seed);
    std::uniform_int_distribution<std::size_t> row(0, binned.rows - 1);
    std::vector<MiMatrix> out;
    out.reserve(replicates);
    BinnedVolumes sample = binned;
    std::vector<std::size_t> picks(binned.rows);
    for (std::size_t b = 0; b < replicates; ++b) {
        for (auto& p : picks) {
            p = row(rng);
        }
        for (std::size_t v = 0; v < kVertices; ++v) {
            const auto src = binned.column(v);
            auto* dst = sample.indices.data() + v * binned.rows;
            for (std::size_t t = 0; t < binned.rows; ++t) {
                dst[t] = src[picks[t]];
            }
        }
        out.push_back(mi_matrix(sample));
    }
    return out;
}

MiMatrix daily_mi_matrix(const BinnedVolumes& binned, std::size_t replicates, std::uint64_t rng_seed, bool resample) {
    if (!resample) {
        if (replicates < 1) {
            throw Error(ErrorCode::InvalidArgument, "bootstrap needs at least one replicate");
        }
        return mi_matrix(binned);
    }
    const auto reps = bootstrap_mi(binned, replicates, rng_seed);
    return average_mi(reps);
}

MiMatrix average_mi(std::span<const MiMatrix> daily) {
    if (daily.empty()) {
        throw Error(ErrorCode::EmptyList, "no matrices to average");
    }
    MiMatrix sum = MiMatrix::Zero(daily.front().rows(), daily.front().cols());
    for (const auto& m : daily) {
        if (m.rows() != sum.rows() || m.cols() != sum.cols()) {
            throw Error(ErrorCode::ShapeMismatch, "matrices of different shape");
        }
        sum += m;
    }
    return sum / static_cast<double>(daily.size());
}

std::vector<std::vector<bool>> Tmfg::adjacency() const {
    std::vector<std::vector<bool>> adj(n, std::vector<bool>(n, false));
    for (const auto& [a, b] : edges) {
        adj[static_cast<std::size_t>(a)][static_cast<std::size_t>(b)] = true;
        adj[static_cast<std::size_t>(b)][static_cast<std::size_t>(a)] = true;
    }
    return adj;
}

std::vector<int> Tmfg::insertion_order() const {
    std::vector<int> order(seed.begin(), seed.end());
    for (const auto& ins : insertions) {
        order.push_back(ins.vertex);
    }
    return order;
}

Tmfg build_tmfg(const Eigen::MatrixXd& weights) {
    check_weights(weights);
    const auto n = static_cast<int>(weights.rows());
    auto w = [&](int a, int b) { return weights(a, b); };

    Tmfg g;
    g.n = static_cast<std::size_t>(n);

    // Seed: exhaustive search over 4-subsets, first maximum in lexicographic order.
    double best = -std::numeric_limits<double>::infinity();
    for (int i = 0; i < n; ++i) {
        for (int j = i + 1; j < n; ++j) {
            for (int k = j + 1; k < n; ++k) {
                for (int l = k + 1; l < n; ++l) {
                    const double s = w(i, j) + w(i, k) + w(i, l) + w(j, k) + w(j, l) + w(k, l);
                    if (s > best) {
                        best = s;
                        g.seed = {i, j, k, l};
                    }
                }
            }
        }
    }

    const auto [a, b, c, d] = g.seed;
    g.edges = {{a, b}, {a, c}, {a, d}, {b, c}, {b, d}, {c, d}};
    std::size_t next_face = 0;
    for (const auto& f : {std::array<int, 3>{a, b, c}, {a, b, d}, {a, c, d}, {b, c, d}}) {
        g.faces.push_back(Face{f, next_face++});
    }

    std::vector<bool> inserted(static_cast<std::size_t>(n), false);
    for (int v : g.seed) {
        inserted[static_cast<std::size_t>(v)] = true;
    }

    for (int step = 0; step < n - 4; ++step) {
        double best_gain = -std::numeric_limits<double>::infinity();
        int best_vertex = -1;
        std::size_t best_face = 0;
        for (int v = 0; v < n; ++v) {
            if (inserted[static_cast<std::size_t>(v)]) {
                continue;
            }
            for (std::size_t fi = 0; fi < g.faces.size(); ++fi) {
                const auto& f = g.faces[fi].vertices;
                const double gain = w(v, f[0]) + w(v, f[1]) + w(v, f[2]);
                if (gain > best_gain) {
                    best_gain = gain;
                    best_vertex = v;
                    best_face = fi;
                }
            }
        }
        if (best_vertex < 0) {
            // Only reachable with NaN weights.
            throw Error(ErrorCode::InvalidArgument, "no finite insertion gain");
        }
        const Face host = g.faces[best_face];
        g.insertions.push_back(Insertion{best_vertex, host, best_gain});
        inserted[static_cast<std::size_t>(best_vertex)] = true;
        g.faces.erase(g.faces.begin() + static_cast<std::ptrdiff_t>(best_face));
        const auto [x, y, z] = host.vertices;
        for (int u : host.vertices) {
            g.edges.push_back(best_vertex < u ? std::array<int, 2>{best_vertex, u} : std::array<int, 2>{u, best_vertex});
        }
        g.faces.push_back(Face{sorted3(best_vertex, x, y), next_face++});
        g.faces.push_back(Face{sorted3(best_vertex, x, z), next_face++});
        g.faces.push_back(Face{sorted3(best_vertex, y, z), next_face++});
    }
    return g;
}

double graph_score(const Eigen::MatrixXd& weights, const Tmfg& graph) {
    double total = 0.0;
    for (const auto& [a, b] : graph.edges) {
        if (a < 0 || b < 0 || a >= weights.rows() || b >= weights.cols()) {
            throw Error(ErrorCode::IndexOutOfRange, "edge outside the weight matrix");
        }
        total += weights(a, b);
    }
    return total;
}

bool is_perfect_elimination_ordering(const std::vector<std::vector<bool>>& adjacency, std::span<const int> order) {
    const std::size_t n = adjacency.size();
    if (order.size() != n) {
        return false;
    }
    std::vector<std::size_t> position(n, n);
    for (std::size_t i = 0; i < n; ++i) {
        const auto v = static_cast<std::size_t>(order[i]);
        if (v >= n || position[v] != n) {
            return false;
        }
        position[v] = i;
    }
    for (std::size_t i = 0; i < n; ++i) {
        const auto v = static_cast<std::size_t>(order[i]);
        std::vector<std::size_t> later;
        for (std::size_t u = 0; u < n; ++u) {
            if (adjacency[v][u] && position[u] > i) {
                later.push_back(u);
            }
        }
        for (std::size_t p = 0; p < later.size(); ++p) {
            for (std::size_t q = p + 1; q < later.size(); ++q) {
                if (!adjacency[later[p]][later[q]]) {
                    return false;
                }
            }
        }
    }
    return true;
}

SimplicialComplex extract_simplices(const Tmfg& graph) {
    SimplicialComplex sc;
    sc.n = graph.n;
    const auto [a, b, c, d] = graph.seed;
    sc.tetrahedra.push_back(graph.seed);
    sc.triangles = {{a, b, c}, {a, b, d}, {a, c, d}, {b, c, d}};
    sc.edges = {{a, b}, {a, c}, {a, d}, {b, c}, {b, d}, {c, d}};
    for (const auto& ins : graph.insertions) {
        const int v = ins.vertex;
        const auto [x, y, z] = ins.host.vertices;
        std::array<int, 4> tet{v, x, y, z};
        std::sort(tet.begin(), tet.end());
        sc.tetrahedra.push_back(tet);
        sc.triangles.push_back(sorted3(v, x, y));
        sc.triangles.push_back(sorted3(v, x, z));
        sc.triangles.push_back(sorted3(v, y, z));
        for (int u : ins.host.vertices) {
            sc.edges.push_back(v < u ? std::array<int, 2>{v, u} : std::array<int, 2>{u, v});
        }
    }
    return sc;
}

VertexColumns vertex_columns(int vertex) {
    if (vertex < 0 || vertex >= static_cast<int>(kVertices)) {
        throw Error(ErrorCode::IndexOutOfRange, "vertex " + std::to_string(vertex) + " outside [0, 20)");
    }
    const auto v = static_cast<std::size_t>(vertex);
    if (v < lob::kLevels) {
        return {4 * v, 4 * v + 1};
    }
    const std::size_t level = v - lob::kLevels;
    return {4 * level + 2, 4 * level + 3};
}

std::array<std::vector<std::size_t>, 3> head_column_maps(const SimplicialComplex& complex) {
    std::array<std::vector<std::size_t>, 3> maps;
    auto append = [](std::vector<std::size_t>& map, std::span<const int> simplex) {
        for (int v : simplex) {
            const auto cols = vertex_columns(v);
            map.push_back(cols.price);
            map.push_back(cols.volume);
        }
    };
    for (const auto& s : complex.tetrahedra) {
        append(maps[0], s);
    }
    for (const auto& s : complex.triangles) {
        append(maps[1], s);
    }
    for (const auto& s : complex.edges) {
        append(maps[2], s);
    }
    return maps;
}

HeadInputs assemble_head_inputs(const Eigen::Ref<const RowMatrix>& window, const SimplicialComplex& complex) {
    if (window.cols() != static_cast<Eigen::Index>(lob::kFeatures)) {
        throw Error(ErrorCode::IndexOutOfRange, "window must have 40 columns, got " + std::to_string(window.cols()));
    }
    const auto maps = head_column_maps(complex);
    auto gather = [&](const std::vector<std::size_t>& map) {
        RowMatrix out(window.rows(), static_cast<Eigen::Index>(map.size()));
        for (Eigen::Index t = 0; t < window.rows(); ++t) {
            for (std::size_t k = 0; k < map.size(); ++k) {
                out(t, static_cast<Eigen::Index>(k)) = window(t, static_cast<Eigen::Index>(map[k]));
            }
        }
        return out;
    };
    return {gather(maps[0]), gather(maps[1]), gather(maps[2])};
}

nlohmann::json mi_to_json(const MiMatrix& m) {
    nlohmann::json j;
    j["n"] = m.rows();
    j["units"] = "nats";
    j["layout"] = "row-major";
    std::vector<double> data;
    data.reserve(static_cast<std::size_t>(m.size()));
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
        for (Eigen::Index c = 0; c < m.cols(); ++c) {
            data.push_back(m(r, c));
        }
    }
    j["data"] = data;
    return j;
}

MiMatrix mi_from_json(const nlohmann::json& j) {
    const auto n = j.at("n").get<Eigen::Index>();
    const auto data = j.at("data").get<std::vector<double>>();
    if (n <= 0 || data.size() != static_cast<std::size_t>(n * n)) {
        throw Error(ErrorCode::ShapeMismatch, "MI matrix payload does not match n");
    }
    MiMatrix m(n, n);
    for (Eigen::Index r = 0; r < n; ++r) {
        for (Eigen::Index c = 0; c < n; ++c) {
            m(r, c) = data[static_cast<std::size_t>(r * n + c)];
        }
    }
    return m;
}

nlohmann::json complex_to_json(const SimplicialComplex& complex) {
    nlohmann::json j;
    j["n"] = complex.n;
    j["ordering"] = kCanonicalOrdering;
    j["tetrahedra"] = complex.tetrahedra;
    j["triangles"] = complex.triangles;
    j["edges"] = complex.edges;
    j["counts"] = {complex.tetrahedra.size(), complex.triangles.size(), complex.edges.size()};
    return j;
}

SimplicialComplex complex_from_json(const nlohmann::json& j) {
    SimplicialComplex sc;
    sc.n = j.at("n").get<std::size_t>();
    sc.tetrahedra = j.at("tetrahedra").get<std::vector<std::array<int, 4>>>();
    sc.triangles = j.at("triangles").get<std::vector<std::array<int, 3>>>();
    sc.edges = j.at("edges").get<std::vector<std::array<int, 2>>>();
    return sc;
}

nlohmann::json tmfg_to_json(const Tmfg& graph) {
    nlohmann::json j;
    j["n"] = graph.n;
    j["seed"] = graph.seed;
    j["edges"] = graph.edges;
    auto& log = j["insertions"] = nlohmann::json::array();
    for (const auto& ins : graph.insertions) {
        log.push_back({{"vertex", ins.vertex},
                       {"host", ins.host.vertices},
                       {"host_discovery", ins.host.discovery},
                       {"gain", ins.gain}});
    }
    auto& faces = j["faces"] = nlohmann::json::array();
    for (const auto& f : graph.faces) {
        faces.push_back(f.vertices);
    }
    return j;
}

void write_mi_csv(const std::filesystem::path& path, const MiMatrix& m) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) {
        throw Error(ErrorCode::IoFailure, "cannot write " + path.string());
    }
    out << "vertex";
    for (Eigen::Index c = 0; c < m.cols(); ++c) {
        out << ",v" << c;
    }
    out << '\n';
    char buf[32];
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
        out << 'v' << r;
        for (Eigen::Index c = 0; c < m.cols(); ++c) {
            std::snprintf(buf, sizeof buf, "%.17g", m(r, c));
            out << ',' << buf;
        }
        out << '\n';
    }
    if (!out) {
        throw Error(ErrorCode::IoFailure, "short write on " + path.string());
    }
}

}  // namespace hloblab::infonet
