#pragma once

// Hand-built models shared across test suites.

#include "pulleytens/model.hpp"

#include <vector>

namespace pulleytens::testing {

/// Compound pulley system: one clustered string over three wheels (the middle
/// one fixed), two hanging strings with loads below.
inline StructureModel compound_pulley_model(double r1 = 0.015, double r2 = 0.030,
                                            double r3 = 0.023) {
    StructureModel m;
    m.name = "compound pulley";
    auto node = [&](int id, double x, double y, std::vector<Attachment> atts, bool pinned) {
        PhysicalNode n;
        n.id = id;
        n.position = {x, y, 0.0};
        n.attachments = std::move(atts);
        n.fixed_z = true;
        n.fixed_x = n.fixed_y = pinned;
        m.nodes.push_back(n);
    };
    node(1, 0.0, 1.0, {{0.0, 0}}, true);
    node(2, 0.25, 0.5, {{r1, +1}, {0.0, 0}}, false);
    node(3, 0.5, 1.0, {{r2, -1}}, true);
    node(4, 0.75, 0.5, {{r3, +1}, {0.0, 0}}, false);
    node(5, 1.0, 1.0, {{0.0, 0}}, true);
    node(6, 0.25, 0.0, {{0.0, 0}}, false);
    node(7, 0.75, 0.0, {{0.0, 0}}, false);

    auto seg = [&](int id, int n0, int a0, int n1, int a1) {
        m.segments.push_back({id, SegmentKind::String, {n0, a0}, {n1, a1}, 0.0});
    };
    seg(1, 1, 1, 2, 1);
    seg(2, 2, 1, 3, 1);
    seg(3, 3, 1, 4, 1);
    seg(4, 4, 1, 5, 1);
    seg(5, 2, 2, 6, 1);
    seg(6, 4, 2, 7, 1);

    // rest lengths leave the drawn configuration lightly tensioned (a few
    // newtons) so the solve starts near equilibrium at the base radii
    m.members.push_back({1, {1, 2, 3, 4}, 2e11, 2.5e-6, 2.3916});
    m.members.push_back({2, {5}, 2e11, 2.5e-6, 0.49999});
    m.members.push_back({3, {6}, 2e11, 2.5e-6, 0.49999});

    m.loads.push_back({6, {0.0, -7.75, 0.0}});
    m.loads.push_back({7, {0.0, -5.5, 0.0}});
    return m;
}

/// Two anchored strings with one free node between them. The equilibrium sits
/// at the midpoint by symmetry.
inline StructureModel two_spring_model(double start_x = 1.2, double start_y = 0.1) {
    StructureModel m;
    m.name = "two springs";
    auto node = [&](int id, double x, double y, bool pinned) {
        PhysicalNode n;
        n.id = id;
        n.position = {x, y, 0.0};
        n.fixed_z = true;
        n.fixed_x = n.fixed_y = pinned;
        m.nodes.push_back(n);
    };
    node(1, 0.0, 0.0, true);
    node(2, start_x, start_y, false);
    node(3, 2.0, 0.0, true);
    m.segments.push_back({1, SegmentKind::String, {1, 1}, {2, 1}, 0.0});
    m.segments.push_back({2, SegmentKind::String, {2, 1}, {3, 1}, 0.0});
    m.members.push_back({1, {1}, 2e9, 1e-6, 0.9});
    m.members.push_back({2, {2}, 2e9, 1e-6, 0.9});
    return m;
}

/// Planar T-bar: two crossing bars, two plain strings on top, and the two
/// bottom strings merged into one clustered string over a wheel at the bottom
/// node. Sized per the published example; `diameter` sets the bottom wheel.
///
/// Node ids: 1 left, 2 right, 3 top, 4 bottom. Members: 1-2 bars, 3 clustered
/// bottom string (right->bottom->left), 4-5 top strings.
inline StructureModel clustered_tbar_model(double diameter, bool pin_both_ends = true) {
    StructureModel m;
    m.name = "clustered T-bar";
    const double r = diameter / 2.0;
    auto node = [&](int id, double x, double y, std::vector<Attachment> atts, bool px, bool py) {
        PhysicalNode n;
        n.id = id;
        n.position = {x, y, 0.0};
        n.attachments = std::move(atts);
        n.fixed_z = true;
        n.fixed_x = px;
        n.fixed_y = py;
        m.nodes.push_back(n);
    };
    node(1, -1.0, 0.0, {{0.0, 0}}, true, true);
    node(2, 1.0, 0.0, {{0.0, 0}}, pin_both_ends, true);
    node(3, 0.0, 1.0, {{0.0, 0}}, false, false);
    // wheel first so the published attachment convention (wheel, then pin)
    // carries over; the string turns clockwise around it
    if (r > 0.0)
        node(4, 0.0, -1.0, {{r, -1}, {0.0, 0}}, false, false);
    else
        node(4, 0.0, -1.0, {{0.0, 0}, {0.0, 0}}, false, false);

    auto seg = [&](int id, SegmentKind kind, int n0, int a0, int n1, int a1) {
        m.segments.push_back({id, kind, {n0, a0}, {n1, a1}, 0.0});
    };
    seg(1, SegmentKind::Bar, 1, 1, 2, 1);      // horizontal bar
    seg(2, SegmentKind::Bar, 3, 1, 4, 2);      // vertical bar, pinned attachment
    seg(3, SegmentKind::String, 2, 1, 4, 1);   // right -> bottom (wheel)
    seg(4, SegmentKind::String, 4, 1, 1, 1);   // bottom (wheel) -> left
    seg(5, SegmentKind::String, 1, 1, 3, 1);   // left -> top
    seg(6, SegmentKind::String, 3, 1, 2, 1);   // top -> right

    m.members.push_back({1, {1}, 2e11, 3.6e-5, 2.0});
    m.members.push_back({2, {2}, 2e11, 3.6e-5, 2.0});
    m.members.push_back({3, {3, 4}, 2e11, 4e-6, 2.8});
    m.members.push_back({4, {5}, 2e11, 4e-6, 1.4});
    m.members.push_back({5, {6}, 2e11, 4e-6, 1.4});
    return m;
}

/// Classical T-bar: same geometry with no wheel and every string its own
/// member (the non-clustered reference).
inline StructureModel classical_tbar_model() {
    StructureModel m = clustered_tbar_model(0.0);
    m.name = "classical T-bar";
    m.members.clear();
    m.members.push_back({1, {1}, 2e11, 3.6e-5, 2.0});
    m.members.push_back({2, {2}, 2e11, 3.6e-5, 2.0});
    m.members.push_back({3, {3}, 2e11, 4e-6, 1.4});
    m.members.push_back({4, {4}, 2e11, 4e-6, 1.4});
    m.members.push_back({5, {5}, 2e11, 4e-6, 1.4});
    m.members.push_back({6, {6}, 2e11, 4e-6, 1.4});
    return m;
}

}  // namespace pulleytens::testing
