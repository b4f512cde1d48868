#include "mcqa/checkpoint.hpp"

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>

namespace mcqa {

namespace {
constexpr const char* kMagic = "mcqa-checkpoint v1";

std::string hexfloat(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%a", v);
    return buf;
}
}  // namespace

void save_checkpoint(const ParamStore& store, const std::string& manifest,
                     const std::string& path) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write checkpoint: " + path);
    out << kMagic << "\n";
    out << "manifest " << manifest << "\n";
    for (const auto& [name, t] : store) {
        out << "tensor " << name << " frozen=" << (store.is_frozen(name) ? 1 : 0)
            << " pinned=" << (store.is_pinned(name) ? 1 : 0) << " shape " << t.rank();
        for (std::size_t i = 0; i < t.rank(); ++i) out << " " << t.dim(i);
        out << "\n";
        for (std::size_t i = 0; i < t.numel(); ++i)
            out << (i ? " " : "") << hexfloat(t.data()[i]);
        out << "\n";
    }
}

Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open checkpoint: " + path);
    std::string line;
    if (!std::getline(in, line) || line != kMagic)
        throw DataError("not a checkpoint file: " + path);
    Checkpoint ckpt;
    if (!std::getline(in, line) || line.rfind("manifest ", 0) != 0)
        throw DataError("checkpoint missing manifest line");
    ckpt.manifest = line.substr(9);
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::istringstream hdr(line);
        std::string tag, name, frozen_kv, pinned_kv, shape_kw;
        std::size_t rank = 0;
        hdr >> tag >> name >> frozen_kv >> pinned_kv >> shape_kw >> rank;
        if (tag != "tensor" || shape_kw != "shape" || !hdr)
            throw DataError("malformed tensor header in checkpoint: " + line);
        std::vector<std::size_t> shape(rank);
        std::size_t numel = 1;
        for (auto& d : shape) {
            hdr >> d;
            numel *= d;
        }
        if (!hdr) throw DataError("malformed tensor shape in checkpoint: " + line);
        if (!std::getline(in, line)) throw DataError("truncated checkpoint: " + name);
        std::vector<double> data;
        data.reserve(numel);
        const char* p = line.c_str();
        char* end = nullptr;
        for (std::size_t i = 0; i < numel; ++i) {
            double v = std::strtod(p, &end);
            if (end == p) throw DataError("bad value in checkpoint tensor " + name);
            data.push_back(v);
            p = end;
        }
        ckpt.params.add(name, Tensor(std::move(shape), std::move(data)));
        if (pinned_kv == "pinned=1")
            ckpt.params.pin(name);
        else if (frozen_kv == "frozen=1")
            ckpt.params.set_frozen(name, true);
    }
    return ckpt;
}

}  // namespace mcqa
