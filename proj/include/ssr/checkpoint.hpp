// Parameter checkpoint container: a plain-text manifest (kind, dimensions,
// scalars as hex-encoded doubles) followed by named SSR1 matrix records in
// manifest order. One file, readable with a text editor up to "end".
#pragma once

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "ssr/ssr1.hpp"
#include "ssr/training.hpp"

namespace ssr {

struct Checkpoint {
    std::string kind;  // "tied_sista" | "untied_sista" | "generic" | free-form
    std::size_t k = 0, n = 0, m = 0;
    std::vector<std::pair<std::string, double>> scalars;
    std::vector<std::pair<std::string, DenseMatrix>> matrices;

    double scalar(const std::string& name) const {
        for (const auto& [k_, v] : scalars)
            if (k_ == name) return v;
        throw IoError("checkpoint: missing scalar " + name);
    }
    const DenseMatrix& matrix(const std::string& name) const {
        for (const auto& [k_, v] : matrices)
            if (k_ == name) return v;
        throw IoError("checkpoint: missing matrix " + name);
    }
};

namespace detail {

inline std::string hex_double(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%a", v);
    return buf;
}

inline double parse_hex_double(const std::string& s) {
    const char* c = s.c_str();
    char* end = nullptr;
    const double v = std::strtod(c, &end);
    if (end == c || *end != '\0') throw IoError("checkpoint: bad scalar value '" + s + "'");
    return v;
}

}  // namespace detail

inline std::string encode_checkpoint(const Checkpoint& c) {
    std::ostringstream manifest;
    manifest << "ssr-checkpoint 1\n";
    manifest << "kind " << c.kind << "\n";
    manifest << "k " << c.k << "\n";
    manifest << "n " << c.n << "\n";
    manifest << "m " << c.m << "\n";
    for (const auto& [name, v] : c.scalars)
        manifest << "scalar " << name << " " << detail::hex_double(v) << "\n";
    for (const auto& [name, mat] : c.matrices) manifest << "matrix " << name << "\n";
    manifest << "end\n";
    std::string out = manifest.str();
    for (const auto& [name, mat] : c.matrices) out += encode_ssr1(mat);
    return out;
}

inline Checkpoint decode_checkpoint(const std::string& bytes, const std::string& where) {
    Checkpoint c;
    std::size_t pos = 0;
    std::vector<std::string> matrix_names;
    bool saw_end = false;
    bool first = true;
    while (pos < bytes.size()) {
        const std::size_t eol = bytes.find('\n', pos);
        if (eol == std::string::npos) throw IoError(where + ": unterminated manifest line");
        const std::string line = bytes.substr(pos, eol - pos);
        pos = eol + 1;
        std::istringstream ls(line);
        std::string tag;
        ls >> tag;
        if (first && tag != "ssr-checkpoint")
            throw IoError(where + ": not a checkpoint file");
        first = false;
        if (tag == "ssr-checkpoint") {
            std::string version;
            ls >> version;
            if (version != "1") throw IoError(where + ": unsupported checkpoint version");
        } else if (tag == "kind") {
            ls >> c.kind;
        } else if (tag == "k") {
            ls >> c.k;
        } else if (tag == "n") {
            ls >> c.n;
        } else if (tag == "m") {
            ls >> c.m;
        } else if (tag == "scalar") {
            std::string name, value;
            ls >> name >> value;
            c.scalars.emplace_back(name, detail::parse_hex_double(value));
        } else if (tag == "matrix") {
            std::string name;
            ls >> name;
            matrix_names.push_back(name);
        } else if (tag == "end") {
            saw_end = true;
            break;
        } else {
            throw IoError(where + ": unknown manifest tag '" + tag + "'");
        }
    }
    if (!saw_end) throw IoError(where + ": missing manifest terminator");
    for (const std::string& name : matrix_names)
        c.matrices.emplace_back(name, decode_ssr1(bytes, pos, where));
    if (pos != bytes.size()) throw IoError(where + ": trailing bytes");
    return c;
}

inline void write_checkpoint(const std::filesystem::path& path, const Checkpoint& c) {
    write_file_atomic(path, encode_checkpoint(c));
}

inline Checkpoint read_checkpoint(const std::filesystem::path& path) {
    return decode_checkpoint(read_file(path), path.string());
}

// ---------------------------------------------------------------------------
// Trainable parameters <-> checkpoint
// ---------------------------------------------------------------------------

namespace detail {

inline DenseMatrix as_column(const DenseVector& v) {
    DenseMatrix m(v.size(), 1);
    m.data = v;
    return m;
}

inline DenseVector as_vector(const DenseMatrix& m) {
    require(m.cols == 1, "checkpoint: expected a column vector");
    return m.data;
}

}  // namespace detail

inline Checkpoint to_checkpoint(const TrainableParams& params) {
    Checkpoint c;
    if (const auto* g = std::get_if<StackedRnnParams>(&params)) {
        c.kind = g->connectivity == Connectivity::generic ? "generic" : "sista_rnn";
        c.k = g->k;
        c.n = g->n;
        c.m = g->m;
        for (std::size_t l = 0; l < g->W.size(); ++l)
            c.matrices.emplace_back("W." + std::to_string(l + 1), g->W[l]);
        // Generic connectivity only ever uses V.1; store exactly what is used.
        const std::size_t v_used = g->connectivity == Connectivity::generic ? 1 : g->V.size();
        for (std::size_t l = 0; l < v_used; ++l)
            c.matrices.emplace_back("V." + std::to_string(l + 1), g->V[l]);
        for (std::size_t l = 0; l < g->S.size(); ++l)
            c.matrices.emplace_back("S." + std::to_string(l + 2), g->S[l]);
        c.matrices.emplace_back("U", g->U);
        c.matrices.emplace_back("c", detail::as_column(g->c));
        for (std::size_t l = 0; l < g->b.size(); ++l)
            c.matrices.emplace_back("b." + std::to_string(l + 1), detail::as_column(g->b[l]));
        for (std::size_t l = 0; l < g->h0.size(); ++l)
            c.matrices.emplace_back("h0." + std::to_string(l + 1), detail::as_column(g->h0[l]));
    } else if (const auto* u = std::get_if<UntiedSistaParams>(&params)) {
        c.kind = "untied_sista";
        c.k = u->layers.size();
        c.n = u->layers[0].D.rows;
        c.m = u->layers[0].A.rows;
        for (std::size_t l = 0; l < u->layers.size(); ++l) {
            const std::string sfx = "." + std::to_string(l + 1);
            c.scalars.emplace_back("alpha" + sfx, u->layers[l].alpha);
            c.scalars.emplace_back("lambda1" + sfx, u->layers[l].lambda1);
            c.scalars.emplace_back("lambda2" + sfx, u->layers[l].lambda2);
            c.matrices.emplace_back("A" + sfx, u->layers[l].A);
            c.matrices.emplace_back("D" + sfx, u->layers[l].D);
            c.matrices.emplace_back("F" + sfx, u->layers[l].F);
        }
        c.matrices.emplace_back("h0", detail::as_column(u->h0));
    } else {
        const auto& t = std::get<TiedSistaNet>(params);
        c.kind = "tied_sista";
        c.k = t.k;
        c.n = t.params.D.rows;
        c.m = t.params.A.rows;
        c.scalars.emplace_back("alpha", t.params.alpha);
        c.scalars.emplace_back("lambda1", t.params.lambda1);
        c.scalars.emplace_back("lambda2", t.params.lambda2);
        c.matrices.emplace_back("A", t.params.A);
        c.matrices.emplace_back("D", t.params.D);
        c.matrices.emplace_back("F", t.params.F);
        c.matrices.emplace_back("h0", detail::as_column(t.params.h0));
    }
    return c;
}

inline TrainableParams from_checkpoint(const Checkpoint& c) {
    if (c.kind == "tied_sista") {
        SistaParams p;
        p.A = c.matrix("A");
        p.D = c.matrix("D");
        p.F = c.matrix("F");
        p.h0 = detail::as_vector(c.matrix("h0"));
        p.alpha = c.scalar("alpha");
        p.lambda1 = c.scalar("lambda1");
        p.lambda2 = c.scalar("lambda2");
        return TiedSistaNet{std::move(p), c.k};
    }
    if (c.kind == "untied_sista") {
        UntiedSistaParams u;
        for (std::size_t l = 0; l < c.k; ++l) {
            const std::string sfx = "." + std::to_string(l + 1);
            UntiedSistaLayer lay;
            lay.A = c.matrix("A" + sfx);
            lay.D = c.matrix("D" + sfx);
            lay.F = c.matrix("F" + sfx);
            lay.alpha = c.scalar("alpha" + sfx);
            lay.lambda1 = c.scalar("lambda1" + sfx);
            lay.lambda2 = c.scalar("lambda2" + sfx);
            u.layers.push_back(std::move(lay));
        }
        u.h0 = detail::as_vector(c.matrix("h0"));
        return u;
    }
    if (c.kind == "generic" || c.kind == "sista_rnn") {
        StackedRnnParams p;
        p.connectivity = c.kind == "generic" ? Connectivity::generic : Connectivity::sista;
        p.k = c.k;
        p.n = c.n;
        p.m = c.m;
        for (std::size_t l = 0; l < c.k; ++l) p.W.push_back(c.matrix("W." + std::to_string(l + 1)));
        const std::size_t v_count = p.connectivity == Connectivity::sista ? c.k : 1;
        for (std::size_t l = 0; l < v_count; ++l)
            p.V.push_back(c.matrix("V." + std::to_string(l + 1)));
        for (std::size_t l = 1; l < c.k; ++l) p.S.push_back(c.matrix("S." + std::to_string(l + 1)));
        p.U = c.matrix("U");
        p.c = detail::as_vector(c.matrix("c"));
        for (std::size_t l = 0; l < c.k; ++l)
            p.b.push_back(detail::as_vector(c.matrix("b." + std::to_string(l + 1))));
        const std::size_t h0_count = p.connectivity == Connectivity::sista ? 1 : c.k;
        for (std::size_t l = 0; l < h0_count; ++l)
            p.h0.push_back(detail::as_vector(c.matrix("h0." + std::to_string(l + 1))));
        validate(p);
        return p;
    }
    throw IoError("checkpoint: unknown kind '" + c.kind + "'");
}

}  // namespace ssr
