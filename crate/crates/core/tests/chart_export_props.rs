//! Chart specification and export properties.

use std::collections::BTreeMap;

use barometer_core::catalog::{CategoryRef, ChartAxes, GroupId, VariableEntry, Visibility};
use barometer_core::chart::{build_chart, toggle_series, ChartKind, ChartSpec};
use barometer_core::cube::{CellAddress, DataCube, Dimension};
use barometer_core::derive::Provenance;
use barometer_core::export::{to_csv, to_svg, to_table, Cell};
use proptest::prelude::*;

fn entry() -> VariableEntry {
    VariableEntry {
        number: 7,
        title: "Generated, \"quoted\" & <escaped>".into(),
        description: String::new(),
        category: CategoryRef {
            group: GroupId::Goals,
            category: "population".into(),
        },
        related_documents: vec![],
        related_variables: vec![],
        default_chart: ChartKind::StackedPercentColumn,
        alternative_charts: vec![
            ChartKind::Line,
            ChartKind::Bar,
            ChartKind::Column,
            ChartKind::StackedColumn,
            ChartKind::Pie,
        ],
        recipe_id: "r".into(),
        visibility: Visibility::Published,
        axes: ChartAxes {
            x: "region".into(),
            series: Some("age".into()),
            filter: BTreeMap::new(),
        },
        drilldown: None,
    }
}

fn cube() -> impl Strategy<Value = DataCube> {
    (1usize..=6, 1usize..=5).prop_flat_map(|(nx, ns)| {
        let cell = prop_oneof![1 => Just(None), 2 => Just(Some(0.0)), 10 => (0u32..100_000).prop_map(|v| Some(f64::from(v) / 4.0))];
        prop::collection::vec(cell, nx * ns).prop_map(move |values| {
            let x = Dimension::from_ids("region", (0..nx).map(|i| format!("r,{i}"))).unwrap();
            let s = Dimension::from_ids("age", (0..ns).map(|i| format!("a\"{i}"))).unwrap();
            DataCube::new(vec![x, s], values).unwrap()
        })
    })
}

fn chart(c: &DataCube, kind: ChartKind) -> ChartSpec {
    build_chart(
        c,
        &entry(),
        kind,
        "region",
        Some("age"),
        &Provenance::from([("s".to_owned(), 3)]),
    )
    .unwrap()
}

fn visible_points(spec: &ChartSpec) -> usize {
    spec.series
        .iter()
        .filter(|s| s.visible)
        .map(|s| s.plotted.iter().flatten().count())
        .sum()
}

proptest! {
    #[test]
    fn tooltips_are_cube_cells(c in cube()) {
        let spec = chart(&c, ChartKind::StackedPercentColumn);
        for (si, s) in spec.series.iter().enumerate() {
            for (x, xid) in spec.x_ids.iter().enumerate() {
                let addr: CellAddress = [xid.clone(), s.id.clone().unwrap()].into_iter().collect();
                prop_assert_eq!(spec.tooltips[si][x].absolute, c.get(&addr).unwrap());
            }
        }
    }

    #[test]
    fn percent_columns_sum_to_hundred(c in cube(), hide in prop::collection::vec(any::<bool>(), 5)) {
        let mut spec = chart(&c, ChartKind::StackedPercentColumn);
        for (i, h) in hide.iter().enumerate().take(spec.series.len()) {
            if *h {
                let name = spec.series[i].name.clone();
                spec = toggle_series(&spec, &name).unwrap();
            }
        }
        for x in 0..spec.x_ids.len() {
            let visible: Vec<_> = spec.series.iter().filter(|s| s.visible).collect();
            let absolutes: Option<Vec<f64>> = visible.iter().map(|s| s.values[x]).collect();
            let shares: Vec<Option<f64>> = visible.iter().map(|s| s.plotted[x]).collect();
            match absolutes {
                None => prop_assert!(shares.iter().all(Option::is_none)),
                Some(a) if a.iter().sum::<f64>() > 0.0 => {
                    let sum: f64 = shares.iter().map(|s| s.unwrap()).sum();
                    prop_assert!((sum - 100.0).abs() <= 1e-9, "column {} sums to {}", x, sum);
                    prop_assert!(!spec.degenerate_columns.contains(&x));
                }
                Some(_) => {
                    prop_assert!(shares.iter().all(|s| *s == Some(0.0)));
                    prop_assert!(spec.degenerate_columns.contains(&x));
                }
            }
        }
    }

    #[test]
    fn toggle_keeps_layout_and_values(c in cube(), pick in any::<prop::sample::Index>()) {
        let spec = chart(&c, ChartKind::StackedPercentColumn);
        let name = spec.series[pick.index(spec.series.len())].name.clone();
        let toggled = toggle_series(&spec, &name).unwrap();
        prop_assert_eq!(&toggled.x_categories, &spec.x_categories);
        let names = |s: &ChartSpec| s.series.iter().map(|x| x.name.clone()).collect::<Vec<_>>();
        prop_assert_eq!(names(&toggled), names(&spec));
        for (a, b) in toggled.series.iter().zip(&spec.series) {
            prop_assert_eq!(&a.values, &b.values);
        }
        prop_assert_eq!(toggle_series(&toggled, &name).unwrap(), spec);
    }

    #[test]
    fn build_is_deterministic(c in cube()) {
        for kind in [ChartKind::Line, ChartKind::Column, ChartKind::StackedColumn, ChartKind::StackedPercentColumn] {
            prop_assert_eq!(chart(&c, kind), chart(&c, kind));
        }
    }

    #[test]
    fn csv_and_table_agree(c in cube(), hide in any::<prop::sample::Index>()) {
        let spec = chart(&c, ChartKind::StackedColumn);
        let spec = toggle_series(&spec, &spec.series[hide.index(spec.series.len())].name.clone()).unwrap();
        let text = to_csv(&spec);
        prop_assert!(text.ends_with("\r\n"));
        let table = to_table(&spec);
        let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(text.as_bytes());
        let headers: Vec<String> = reader.headers().unwrap().iter().map(str::to_owned).collect();
        prop_assert_eq!(&headers, &table.headers);
        let rows: Vec<Vec<String>> = reader.records().map(|r| r.unwrap().iter().map(str::to_owned).collect()).collect();
        prop_assert_eq!(rows.len(), table.rows.len());
        for (parsed, cells) in rows.iter().zip(&table.rows) {
            prop_assert_eq!(parsed.len(), cells.len());
            for (p, cell) in parsed.iter().zip(cells) {
                match cell {
                    Cell::Label(l) => prop_assert_eq!(p, l),
                    Cell::Value(v) => prop_assert_eq!(p.parse::<f64>().unwrap(), *v),
                    Cell::Empty => prop_assert_eq!(p, ""),
                }
            }
        }
    }

    #[test]
    fn svg_is_well_formed_with_one_shape_per_point(c in cube(), kind_pick in 0usize..4, hide in any::<prop::sample::Index>()) {
        let kind = [ChartKind::Line, ChartKind::Column, ChartKind::StackedColumn, ChartKind::StackedPercentColumn][kind_pick];
        let spec = chart(&c, kind);
        let spec = toggle_series(&spec, &spec.series[hide.index(spec.series.len())].name.clone()).unwrap();
        let svg = to_svg(&spec, 640.0, 400.0).unwrap();
        prop_assert_eq!(&svg, &to_svg(&spec, 640.0, 400.0).unwrap());
        let doc = roxmltree::Document::parse(&svg).unwrap();
        prop_assert_eq!(doc.root_element().tag_name().name(), "svg");
        let shapes = doc.descendants().filter(|n| n.attribute("class") == Some("point")).count();
        prop_assert_eq!(shapes, visible_points(&spec));
    }

    #[test]
    fn pie_svg_shapes(values in prop::collection::vec(prop::option::weighted(0.9, 0u32..1000), 1..8)) {
        let x = Dimension::from_ids("region", (0..values.len()).map(|i| format!("r{i}"))).unwrap();
        let c = DataCube::new(vec![x], values.iter().map(|v| v.map(f64::from)).collect()).unwrap();
        let spec = build_chart(&c, &entry(), ChartKind::Pie, "region", None, &Provenance::new()).unwrap();
        let svg = to_svg(&spec, 300.0, 300.0).unwrap();
        let doc = roxmltree::Document::parse(&svg).unwrap();
        let shapes = doc.descendants().filter(|n| n.attribute("class") == Some("point")).count();
        prop_assert_eq!(shapes, visible_points(&spec));
    }
}
