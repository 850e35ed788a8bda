#include "clmpt/error.hpp"

namespace clmpt {

const char* error_kind_name(ErrorKind kind) {
    switch (kind) {
        case ErrorKind::Parse: return "parse";
        case ErrorKind::Config: return "config";
        case ErrorKind::Validation: return "validation";
        case ErrorKind::Shape: return "shape";
        case ErrorKind::Index: return "index";
        case ErrorKind::Contract: return "contract";
        case ErrorKind::Sampling: return "sampling";
        case ErrorKind::Training: return "training";
        case ErrorKind::Io: return "io";
    }
    return "unknown";
}

} // namespace clmpt
