use doppler_odom::geometry::{exp_se3, Twist};
use doppler_odom::register::{register, source_from_scan, RegistrationParams};
use doppler_odom::scan::{estimate_normals, voxel_downsample};
use doppler_odom::synth::{generate_sequence, preset};

fn main() {
    let spec = preset("tunnel").unwrap();
    let (scans, truth) = generate_sequence(&spec).unwrap();
    let src = voxel_downsample(&scans[0], 0.5);
    let tgt = voxel_downsample(&scans[1], 0.5);
    let normals = estimate_normals(&tgt, 20, 2.0);
    println!("src {} tgt {} valid normals {}", src.len(), tgt.len(), normals.valid_count());
    let gt = truth.relative_pose(0);
    println!("gt_t {:?}", gt.translation);
    let init = exp_se3(&-truth.frames[0].twist, 0.1).unwrap();
    println!("init_t {:?}", init.translation);
    let res = register(&source_from_scan(&src), &tgt, &normals, &init, &RegistrationParams::default()).unwrap();
    println!("conv {} iters {}", res.converged, res.iterations);
    println!("est_t {:?} rre {:.3}", res.pose.translation, (res.pose.rotation.transpose()*gt.rotation).angle().to_degrees());
    for (i, s) in res.iteration_stats.iter().enumerate().take(12) {
        println!("  it{i}: pairs {} cost {:.4}->{:.4} rot {:.3e} trans {:.3e} damped {}", s.correspondences, s.cost_before, s.cost_after, s.rot_step, s.trans_step, s.damped);
    }
    // lambda_v = 0 comparison
    let p2pl = RegistrationParams { lambda_v: 0.0, ..Default::default() };
    let res2 = register(&source_from_scan(&src), &tgt, &normals, &init, &p2pl).unwrap();
    println!("p2pl: conv {} iters {} est_t {:?} rre {:.3}", res2.converged, res2.iterations, res2.pose.translation, (res2.pose.rotation.transpose()*gt.rotation).angle().to_degrees());
}
