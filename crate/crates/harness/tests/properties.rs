use asn_harness::config::RunConfig;
use proptest::prelude::*;

fn overrides() -> impl Strategy<Value = Vec<String>> {
    let preset = prop_oneof![Just(("mmo", "multi-action-unshared")), Just(("marines", "basic")), Just(("marines", "vanilla"))];
    let algorithm = prop_oneof![Just("iql"), Just("vdn"), Just("qmix"), Just("ppo"), Just("a2c")];
    (
        preset,
        algorithm,
        1u64..1_000_000,
        proptest::collection::btree_set(0u64..100, 1..4),
        any::<bool>(),
        -2.0f64..2.0,
        1usize..6,
    )
        .prop_map(|((preset, variant), algo, steps, seeds, mask, padding, team)| {
            let mut o = vec![
                format!("env.preset=\"{preset}\""),
                format!("net.variant=\"{variant}\""),
                format!("algorithm=\"{algo}\""),
                format!("total_steps={steps}"),
                format!("seeds={:?}", seeds.into_iter().collect::<Vec<_>>()),
                format!("mask_invalid={mask}"),
                format!("env.padding={padding:?}"),
            ];
            if preset == "marines" {
                o.push(format!("env.team_sizes=[{team}, {team}]"));
            }
            o
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn configs_survive_a_toml_round_trip(o in overrides()) {
        let c = RunConfig::parse("", &o).unwrap();
        let again = RunConfig::parse(&c.to_toml().unwrap(), &[]).unwrap();
        prop_assert_eq!(c, again);
    }
}
