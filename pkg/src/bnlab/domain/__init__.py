"""Domain providers: geometry, Green function, eigenbases, quadrature, nodal domains."""
from .eigen import BallMode, EigenBasis, SineMode, bessel_zero, eigenbasis
from .geometry import ConfigurationSet, DomainSpec, HyperBox, UnitBall, admissible
from .nodal import NodalResult, ResolutionWarning, nodal_domains, product_nodal_count
from .quadrature import (AxisymmetricRule, QuadResult, QuadSettings, axisymmetric_ball_rule, ball_rule,
                         box_rule, quadrature, stratified_mc)


def green_function(domain: DomainSpec, x, xi):
    return domain.green(x, xi)


def green_regular_part(domain: DomainSpec, x, xi, need_gradient: bool = False):
    return domain.regular_part(x, xi, need_gradient=need_gradient)


__all__ = [
    "AxisymmetricRule", "BallMode", "ConfigurationSet", "DomainSpec", "EigenBasis", "HyperBox",
    "NodalResult", "QuadResult", "QuadSettings", "ResolutionWarning", "SineMode", "UnitBall",
    "admissible", "axisymmetric_ball_rule", "ball_rule", "bessel_zero", "box_rule", "eigenbasis",
    "green_function", "green_regular_part", "nodal_domains", "product_nodal_count", "quadrature",
    "stratified_mc",
]
