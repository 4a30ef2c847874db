use vdc_core::image::Image;
use vdc_core::losses::MaskImage;
use vdc_core::metrics::{compute_psnr_ssim, mse, psnr, ssim, MetricsReport, CSV_HEADER, PSNR_CAP};

fn ramp(w: usize, h: usize) -> Image {
    let data = (0..w * h * 3).map(|i| (i % 97) as f64 / 97.0).collect();
    Image::new(w, h, 3, data).unwrap()
}

#[test]
fn uniform_offset_of_a_tenth_is_20_db() {
    let x = Image::filled(16, 16, 3, 0.5);
    let y = Image::filled(16, 16, 3, 0.6);
    let p = psnr(&x, &y, None).unwrap().unwrap();
    assert!((p - 20.0).abs() < 1e-9, "{p}");
}

#[test]
fn ssim_is_symmetric_and_bounded() {
    let x = ramp(20, 18);
    let y = Image::new(20, 18, 3, x.data.iter().map(|v| (v * 0.8 + 0.05).min(1.0)).collect()).unwrap();
    let a = ssim(&x, &y, None).unwrap().unwrap();
    let b = ssim(&y, &x, None).unwrap().unwrap();
    assert!((a - b).abs() < 1e-12);
    assert!(a < 1.0 && a > -1.0);
}

#[test]
fn ssim_rejects_images_smaller_than_the_window() {
    let x = Image::filled(10, 10, 3, 0.2);
    assert!(ssim(&x, &x, None).is_err());
}

#[test]
fn empty_region_has_no_score() {
    let x = Image::filled(12, 12, 3, 0.2);
    let empty = MaskImage::zeros(12, 12);
    assert_eq!(mse(&x, &x, Some(&empty)).unwrap(), None);
    let row = compute_psnr_ssim(3, &x, &x, Some(&empty)).unwrap();
    assert_eq!(row.psnr_masked, None);
    assert_eq!(row.psnr_unmasked, Some(PSNR_CAP));
}

#[test]
fn region_psnr_only_sees_its_pixels() {
    let x = Image::filled(12, 12, 3, 0.5);
    let mut y = x.clone();
    for c in 0..3 {
        y.data[c] = 0.0;
    }
    let mut m = vec![0.0; 144];
    m[0] = 1.0;
    let mask = MaskImage::new(12, 12, m).unwrap();
    let row = compute_psnr_ssim(0, &y, &x, Some(&mask)).unwrap();
    assert!((row.psnr_masked.unwrap() - (-10.0 * 0.25f64.log10())).abs() < 1e-9);
    assert_eq!(row.psnr_unmasked, Some(PSNR_CAP));
}

#[test]
fn csv_has_header_and_one_row_per_frame() {
    let x = ramp(12, 12);
    let y = Image::filled(12, 12, 3, 0.4);
    let report = MetricsReport {
        rows: vec![
            compute_psnr_ssim(0, &x, &y, None).unwrap(),
            compute_psnr_ssim(1, &y, &x, None).unwrap(),
        ],
    };
    let csv = report.to_csv();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], CSV_HEADER);
    assert_eq!(lines.len(), 3);
    assert!(lines[1].starts_with("0,") && lines[1].ends_with(",nan,nan"));
    assert!((report.mean_psnr() - report.rows[0].psnr).abs() < 1e-12);
}
