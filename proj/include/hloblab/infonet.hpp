#pragma once

// Information filtering network over LOB volume levels: volume binning,
// plug-in mutual information with daily bootstrap, TMFG construction and the
// simplicial gather that feeds the three model heads.
//
// Vertex indexing is fixed everywhere: 0-9 are ask volume levels 1-10,
// 10-19 are bid volume levels 1-10.

#include "hloblab/error.hpp"
#include "hloblab/lob_ingest.hpp"
#include "hloblab/preprocess.hpp"

#include <Eigen/Core>
#include <nlohmann/json.hpp>

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

namespace hloblab::infonet {

inline constexpr std::size_t kVertices = 2 * lob::kLevels;
inline constexpr int kDefaultBins = 32;
inline constexpr std::size_t kDefaultBootstrap = 10;

using MiMatrix = Eigen::MatrixXd;
using prep::RowMatrix;

struct BinnedVolumes {
    std::size_t rows = 0;
    int n_bins = 0;
    double bin_width = 1.0;
    lob::Volume min_volume = 0;
    lob::Volume max_volume = 0;
    std::vector<std::int32_t> indices;  // column-major, kVertices columns

    std::span<const std::int32_t> column(std::size_t vertex) const {
        return {indices.data() + vertex * rows, rows};
    }
};

/// Volume of vertex `v` (see the indexing note above) in one snapshot.
lob::Volume vertex_volume(const lob::LobSnapshot& snap, std::size_t v);

/// Equal-width bins over the joint range of all 20 volume columns of the day.
BinnedVolumes bin_volumes(const lob::LobSeries& day, int n_bins, Diagnostics* diagnostics = nullptr);

double entropy(std::span<const std::int32_t> x);
double mutual_information(std::span<const std::int32_t> x, std::span<const std::int32_t> y);

/// Full pairwise matrix; the diagonal holds column entropies.
MiMatrix mi_matrix(const BinnedVolumes& binned);

/// One MI matrix per bootstrap replicate (rows resampled with replacement).
std::vector<MiMatrix> bootstrap_mi(const BinnedVolumes& binned, std::size_t replicates, std::uint64_t rng_seed);

/// Mean of `replicates` bootstrap matrices. With `resample` false every
/// replicate is the plain plug-in matrix.
MiMatrix daily_mi_matrix(const BinnedVolumes& binned, std::size_t replicates, std::uint64_t rng_seed,
                         bool resample = true);

MiMatrix average_mi(std::span<const MiMatrix> daily);

struct Face {
    std::array<int, 3> vertices{};  // ascending
    std::size_t discovery = 0;
};

struct Insertion {
    int vertex = -1;
    Face host;
    double gain = 0.0;
};

struct Tmfg {
    std::size_t n = 0;
    std::array<int, 4> seed{};                 // ascending
    std::vector<std::array<int, 2>> edges;     // discovery order
    std::vector<Insertion> insertions;         // in insertion order
    std::vector<Face> faces;                   // faces at termination, discovery order

    std::vector<std::vector<bool>> adjacency() const;
    /// Seed vertices followed by inserted vertices.
    std::vector<int> insertion_order() const;
};

/// Greedy TMFG: maximum-weight seed tetrahedron, then n-4 insertions of the
/// (vertex, face) pair with the largest gain. Ties go to the lexicographically
/// smallest seed and to the smallest (vertex, face discovery index).
Tmfg build_tmfg(const Eigen::MatrixXd& weights);

/// Sum of the weights of the retained edges.
double graph_score(const Eigen::MatrixXd& weights, const Tmfg& graph);

bool is_perfect_elimination_ordering(const std::vector<std::vector<bool>>& adjacency, std::span<const int> order);

struct SimplicialComplex {
    std::size_t n = 0;
    std::vector<std::array<int, 4>> tetrahedra;
    std::vector<std::array<int, 3>> triangles;
    std::vector<std::array<int, 2>> edges;
};

inline constexpr const char* kCanonicalOrdering = "discovery-order; ascending vertex index within each simplex";

SimplicialComplex extract_simplices(const Tmfg& graph);

/// LOBSTER column of the price and the volume belonging to a volume vertex.
struct VertexColumns {
    std::size_t price;
    std::size_t volume;
};
VertexColumns vertex_columns(int vertex);

enum class Head { Tetrahedra = 0, Triangles = 1, Edges = 2 };
inline constexpr std::array<Head, 3> kHeads{Head::Tetrahedra, Head::Triangles, Head::Edges};

/// For each head, the window column feeding each flattened slot: per simplex,
/// per vertex, the (price, volume) pair of that level and side.
std::array<std::vector<std::size_t>, 3> head_column_maps(const SimplicialComplex& complex);

struct HeadInputs {
    RowMatrix tetrahedra;  // T x 136 for n = 20
    RowMatrix triangles;   // T x 312
    RowMatrix edges;       // T x 216
};

HeadInputs assemble_head_inputs(const Eigen::Ref<const RowMatrix>& window, const SimplicialComplex& complex);

nlohmann::json mi_to_json(const MiMatrix& m);
MiMatrix mi_from_json(const nlohmann::json& j);
nlohmann::json complex_to_json(const SimplicialComplex& complex);
SimplicialComplex complex_from_json(const nlohmann::json& j);
nlohmann::json tmfg_to_json(const Tmfg& graph);
void write_mi_csv(const std::filesystem::path& path, const MiMatrix& m);

}  // namespace hloblab::infonet
