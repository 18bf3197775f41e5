#pragma once

#include <Eigen/Dense>
#include <stdexcept>
#include <string>

namespace passmat {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

/// Base class for all passmat errors. Subclasses identify the failure mode;
/// the message carries instance detail (indices, offending values).
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

#define PASSMAT_DEFINE_ERROR(name)              \
  class name : public Error {                   \
   public:                                      \
    using Error::Error;                         \
  }

// demand
PASSMAT_DEFINE_ERROR(NonPositivePrice);
PASSMAT_DEFINE_ERROR(OutOfDomain);
PASSMAT_DEFINE_ERROR(QuadratureUnderflow);
PASSMAT_DEFINE_ERROR(SingularOwnSlope);
PASSMAT_DEFINE_ERROR(ZeroDenominator);
PASSMAT_DEFINE_ERROR(InvalidDemandSpec);

// market
PASSMAT_DEFINE_ERROR(DimensionMismatch);
PASSMAT_DEFINE_ERROR(InvalidPartition);
PASSMAT_DEFINE_ERROR(IndexOutOfRange);
PASSMAT_DEFINE_ERROR(UnsupportedDemand);

// equilibrium / passthrough
PASSMAT_DEFINE_ERROR(DomainExhausted);
PASSMAT_DEFINE_ERROR(SingularA);
PASSMAT_DEFINE_ERROR(SingularJacobian);
PASSMAT_DEFINE_ERROR(SingularBlock);
PASSMAT_DEFINE_ERROR(RegularityViolation);
PASSMAT_DEFINE_ERROR(ZeroWeight);
PASSMAT_DEFINE_ERROR(DegenerateDenominator);
PASSMAT_DEFINE_ERROR(BoundInapplicable);

// asymptotics
PASSMAT_DEFINE_ERROR(NotVanishing);
PASSMAT_DEFINE_ERROR(NonConvergent);
PASSMAT_DEFINE_ERROR(DegenerateAids);
PASSMAT_DEFINE_ERROR(QuadratureFailure);
PASSMAT_DEFINE_ERROR(GridOutOfRange);
PASSMAT_DEFINE_ERROR(SingularNestBlock);
PASSMAT_DEFINE_ERROR(SingularJStar);

// applications
PASSMAT_DEFINE_ERROR(NonPositivePriceOrCost);
PASSMAT_DEFINE_ERROR(SingularLambdaPre);
PASSMAT_DEFINE_ERROR(NoConvergence);

// io / cli
PASSMAT_DEFINE_ERROR(InputError);

#undef PASSMAT_DEFINE_ERROR

}  // namespace passmat
