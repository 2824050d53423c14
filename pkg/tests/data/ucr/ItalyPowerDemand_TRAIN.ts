#The data was derived from twelve monthly electrical power demand
#time series from Italy and first used in the paper "Intelligent
#Icons: Integrating Lite-Weight Data Mining and Visualization into
#GUI Operating Systems". The classification task is to distinguish
#days from Oct to March (inclusive) from April to September.
@problemName ItalyPowerDemand
@timeStamps false
@missing false
@univariate true
@equalLength true
@seriesLength 24
@classLabel true 1 2
@data
-0.71051757,-1.1833204,-1.3724416,-1.5930829,-1.4670021,-1.3724416,-1.0887599,0.045966947,0.92853223,1.0861332,1.2752543,0.96005242,0.61333034,0.014446758,-0.6474772,-0.26923494,-0.20619456,0.61333034,1.3698149,1.4643754,1.054613,0.58181015,0.1720477,-0.26923494:1
-0.99300935,-1.4267865,-1.5798843,-1.6054006,-1.6309169,-1.3757539,-1.0185257,-0.35510183,0.71658276,1.2013925,1.1248436,1.0482947,0.79313166,0.46141977,0.48693607,0.56348497,0.61451757,0.30832197,0.25728936,1.0993273,1.0482947,0.69106647,-0.048906237,-0.38061813:1
1.3190669,0.56977448,0.19512825,-0.085856424,-0.17951799,-0.27317954,-0.085856424,-1.3971182,-1.1161336,-0.74148733,0.0078051347,-0.085856424,0.0078051347,-0.46050266,-0.55416422,-0.74148733,-0.74148733,-0.74148733,-1.1161336,-0.46050266,0.47611292,2.3493441,2.2556825,1.6000516:2
-0.81244429,-1.1575534,-1.4163852,-1.5314215,-1.5026624,-1.4163852,-1.6464579,-0.46733521,0.6542693,1.0568965,1.3444874,1.200692,0.99937838,0.6542693,0.74054657,0.88434202,0.88434202,0.68302839,0.62551021,0.42419658,-0.0071897655,-0.035948855,0.1078466,-0.26602157:2
-0.97284033,-1.3905178,-1.5367049,-1.6202404,-1.6202404,-1.4531694,-0.9937242,0.050469368,0.63521776,1.0320113,0.80228873,0.8231726,0.65610163,0.3846113,0.32195969,0.48903066,0.61433389,1.3035016,1.24085,1.0737791,0.55168227,0.42637904,-0.17925321,-0.63869838:1
0.36742384,-0.27780827,-0.76173234,-0.86927102,-1.1381178,-1.0843484,-1.1381178,-0.60042432,-1.0843484,-0.27780827,0.36742384,0.47496251,0.52873185,0.098577125,-0.27780827,-0.38534696,-0.60042432,-0.54665497,-0.49288564,0.36742384,2.3031202,2.0880428,1.7654268,1.173964:1
0.087212802,-0.5764553,-1.0869692,-1.3932776,-1.3932776,-1.2911748,-1.7506373,-0.72960947,0.34246976,1.7208573,1.8229601,1.7719087,1.159292,0.80193229,0.18931559,-0.014889982,-0.065941374,-0.065941374,-0.014889982,0.087212802,-0.32119833,-0.21909555,0.7508809,0.18931559:2
-1.0990687,-1.375564,-1.5230281,-1.5598942,-1.5967602,-1.430863,-1.1359347,-0.23271685,0.652068,0.94699629,1.0022954,0.91013026,0.79953215,0.43087179,0.55990291,0.63363499,0.83639818,0.78109913,1.2050586,0.98386233,0.59676895,0.30184066,-0.12211874,-0.56451118:1
-1.1498699,-1.5492459,-1.4893395,-1.5692147,-1.5692147,-1.4494019,-1.0899635,0.088195523,0.3477899,1.0666666,1.1066042,1.0466978,0.64732186,0.50754028,0.60738427,0.62735306,0.68725946,0.72719705,1.0666666,0.96682264,0.58741547,0.36775869,-0.071554863,-0.51086841:1
-0.75623962,-1.1883766,-1.3154757,-1.4425748,-1.4425748,-1.2900559,-1.5442541,-0.88333872,0.41307207,1.2010865,1.277346,1.2519261,0.99772791,0.845209,0.89604864,0.97230809,1.0231478,0.7181099,0.31139279,0.48933153,-0.14616395,-0.19700358,0.057194601,-0.24784322:2
-0.50951707,-1.2395714,-1.2395714,-1.6045985,-1.6045985,-1.1483146,-0.78328746,-1.2395714,-0.14448992,0.95059156,1.3156187,1.4981323,1.2243619,0.85933478,0.49430761,0.76807799,0.49430761,0.49430761,0.12928045,-0.32700349,-0.69203065,1.0418483,0.85933478,0.40305082:2
-1.0048172,-1.3816236,-1.5574667,-1.6077075,-1.6579484,-1.4318645,-1.0801785,0.22608387,0.9294559,1.1806602,1.1052989,0.87921505,0.72849247,0.52752903,0.55264946,0.65313118,0.57776989,0.27632473,0.22608387,1.2057806,0.77873333,0.52752903,0.025120436,-0.67825161:1
-0.97486577,-1.2824483,-1.5490198,-1.6105364,-1.6310419,-1.4875033,-1.0158768,-0.13414016,0.68607994,1.0346735,1.014168,0.89113497,0.52203592,0.44001391,0.39900291,0.41950841,0.54254143,1.301245,1.219223,0.91164047,0.58355243,0.52203592,-0.19565667,-0.60576673:1
-0.8749153,-1.2653157,-1.4884017,-1.6836019,-1.6836019,-1.5162874,-1.2653157,-0.31720038,0.51937202,1.1328584,1.1886299,1.1886299,0.88188674,0.57514352,0.60302927,0.63091502,0.88188674,0.49148628,0.26840031,0.35205754,0.88188674,0.63091502,0.15685732,-0.28931464:2
-0.96432326,-1.4332951,-1.5270895,-1.6208838,-1.667781,-1.4332951,-0.96432326,-0.23741698,0.65362945,1.1460499,1.1460499,1.0053583,0.7708724,0.37224636,0.37224636,0.55983509,0.5363865,0.39569495,0.46604073,1.4039844,0.88811534,0.55983509,0.067414695,-0.49535147:1
0.83967029,-0.36945493,-0.42703232,-0.83007406,-0.94522885,-0.88765145,-1.8088897,-1.5210028,-1.117961,-0.42703232,0.37905116,0.66693812,0.83967029,0.1487416,-0.081567973,-0.31187754,-0.5421871,-0.25430015,-0.023990582,0.37905116,0.95482508,2.1639503,1.7033312,1.4730216:2
-0.5855154,-0.81972157,-1.1877598,-1.455424,-1.7900042,-1.388508,-1.0539277,-0.41822529,-0.45168331,0.11710308,0.51859936,0.65243145,0.55205738,0.21747715,-0.11710308,-0.48514133,0.016729013,1.1543018,1.421966,1.6227141,1.52234,1.3215919,0.68588947,-0.050187035:1
-0.25805705,-0.73143556,-1.1259177,-1.362607,-1.4809516,-1.4415034,-1.0864695,-0.77088377,-0.81033198,0.018080433,0.33366612,0.64925181,0.68870002,-0.1002642,-0.21860884,-0.29750526,-0.25805705,0.88594105,1.5171125,1.7143535,1.6354571,1.3593196,0.84649285,0.29421791:1
-0.8695845,-1.2261027,-1.4180741,-1.527772,-1.527772,-1.472923,-1.5551964,-0.65018867,0.50163941,1.1872514,1.2146758,1.2969493,1.0227045,0.69361076,0.69361076,0.80330867,0.80330867,0.66618628,0.3919415,0.33709254,0.090272243,0.11769672,0.44679046,-0.01942567:2
-1.07068,-1.3139809,-1.48242,-1.5572818,-1.5572818,-1.48242,-1.0519645,-0.17233815,0.46398732,0.96930461,0.9318737,0.91315825,0.68857278,0.63242641,0.48270278,0.52013369,0.65114187,1.2874673,1.0815973,1.0628819,0.66985732,0.31426368,-0.26591542,-0.71508634:1
-1.0419662,-1.3488029,-1.5213985,-1.617285,-1.6364623,-1.2145619,-1.0994981,-0.25569723,0.77987657,1.1442451,1.1634224,0.9716495,0.85658575,0.49221718,0.45386259,0.53057176,0.70316739,0.6839901,1.1058905,1.0100041,0.51139447,0.24291237,-0.21734265,-0.69677498:1
-0.81286761,-1.1727142,-1.5068574,-1.558264,-1.6096707,-1.3783408,-1.1213075,-0.63294435,0.62651852,1.3205083,1.3976183,1.3976183,1.1662883,0.75503514,0.65222184,0.70362849,0.67792517,0.42089193,0.29237531,0.086748719,0.0096387477,0.52370523,0.18956202,-0.42731777:2
-1.0944947,-1.3613994,-1.606062,-1.6505462,-1.6505462,-1.4726097,-1.1167367,0.26227095,0.84056449,1.1297113,1.1074692,1.018501,0.77383832,0.37348125,0.37348125,0.59590184,0.55141772,0.35123919,0.50693361,1.1741954,0.75159626,0.46244949,0.017608295,-0.33826465:1
-0.83894258,-1.1511073,-1.4632719,-1.5881378,-1.7130037,-1.4320555,-1.0262414,-0.4331285,0.22241734,0.44093261,0.97161257,1.0340455,0.81553023,0.44093261,0.097551463,0.097551463,0.12876793,1.0340455,1.3774267,1.4710761,1.0964784,0.69066436,0.066334995,-0.33947909:1
-0.96550567,-1.344988,-1.5584468,-1.6533173,-1.6295997,-1.4635762,-1.0603763,0.078070577,0.62357635,1.2639527,1.1927998,0.95562332,0.78959982,0.36268228,0.41011757,0.33896464,0.50498814,0.33896464,0.52870578,1.4299762,0.81331747,0.50498814,-0.016799991,-0.44371754:1
-0.40497694,-1.0099218,-1.332559,-1.4535479,-1.4938776,-1.2922293,-0.84860314,-0.5259659,0.80491268,1.4098575,1.4098575,1.2082092,0.76458302,0.11930856,-0.32431763,-0.24365833,-0.16299902,-0.4453066,-0.16299902,1.7324947,1.4098575,0.92590164,0.15963821,-0.24365833:1
-0.92024696,-1.3825106,-1.5365984,-1.6136424,-1.6393237,-1.4338732,-0.99729089,-0.3038955,0.6719943,1.1342579,1.2113018,1.2113018,0.77471954,0.36381857,0.38949988,0.33813726,0.46654381,0.38949988,0.38949988,1.391071,0.9031261,0.62063168,-0.098445017,-0.32957681:1
-0.64846556,-1.0947214,-1.3736314,-1.4851953,-1.6525413,-1.4294133,-0.81581151,-0.8715935,0.13248221,1.0807759,1.3596859,1.3596859,1.3039039,0.85764799,0.80186601,0.91342997,1.0807759,0.57873808,0.35561015,-0.034863743,-0.70424755,0.1882642,0.29982816,-0.20220969:2
-0.97386362,-1.2951382,-1.562867,-1.6431857,-1.5093212,-1.5093212,-1.0809551,-0.3848602,0.47187205,1.3821501,1.3286043,1.2750585,0.90023817,0.65928223,0.712828,0.712828,0.63250935,0.36478052,0.28446188,0.12382458,0.31123476,0.84669241,0.23091611,-0.27776867:2
-0.88821875,-1.3608299,-1.5846983,-1.6095726,-1.5846983,-1.460327,-0.98771583,-0.51510469,0.50474041,1.1017229,1.1763457,1.0271001,0.6788603,0.33062051,0.45499187,0.45499187,0.57936322,0.4301176,0.45499187,1.4499627,0.95247728,0.75348312,0.057003537,-0.41560761:1
-1.0434107,-1.3483344,-1.5007963,-1.5770272,-1.6342004,-1.4626808,-1.0815262,-0.28110152,0.84330456,0.97670867,0.97670867,0.86236229,0.70990045,0.38591904,0.53838088,0.51932315,0.74801591,1.0148241,1.167286,1.0338819,0.51932315,0.30968812,-0.10958195,-0.56696746:1
0.33926348,-0.32541599,-0.71314569,-0.93470552,-1.1008754,-1.1008754,-0.87931556,-0.54697582,-0.99009547,-0.32541599,0.28387353,0.61621327,0.50543335,0.11770366,-0.38080595,-0.54697582,-0.71314569,-0.71314569,-0.38080595,0.4500434,2.3886919,2.0563521,1.7240124,1.1701128:2
-0.75212665,-1.0692752,-1.3599948,-1.49214,-1.518569,-1.3864238,-1.49214,-0.59355236,0.41075145,1.1507648,1.3093391,1.28291,1.0714776,0.86004526,0.93933241,0.91290336,0.9921905,0.72790002,0.46360955,0.27860621,-0.1706876,-0.19711665,-0.1178295,-0.24997474:2
-0.35731046,-0.852048,-1.3055574,-1.4704699,-1.511698,-1.4704699,-1.0169605,-0.72836361,-0.43976671,0.013742692,0.67339274,0.75584899,0.75584899,0.1786552,-0.39853859,-0.2748542,-0.027485436,1.0856741,1.5391835,1.6628679,1.5391835,1.0856741,0.59093648,-0.027485436:1
0.065389251,-0.52987845,-1.1251461,-1.3957223,-1.4498376,-1.2874918,-1.99099,-0.74633943,0.55242645,1.4723856,1.8511923,1.7429618,1.2559246,0.49831121,-0.096956484,0.17361974,0.1195045,0.065389251,0.065389251,0.28185023,0.011274006,-0.096956484,0.55242645,0.011274006:2
-0.89604071,-1.2312502,-1.4117476,-1.4891037,-1.4891037,-1.437533,-1.4891037,-0.74132864,0.47058254,1.2183575,1.1925722,1.1410015,1.1152162,0.75422134,0.72843599,0.85736271,0.83157737,0.96050409,0.29008513,0.36744116,0.0064463443,0.058017034,0.26429978,-0.070909689:2
-1.114926,-1.3384192,-1.5212772,-1.6025474,-1.6025474,-1.5009596,-1.0336558,-0.078730541,0.4901611,0.7339718,0.69333668,0.93714738,0.9777825,0.55111377,0.55111377,0.7339718,0.81524203,1.0996878,1.0387352,1.0793703,0.61206645,0.2463504,-0.16000077,-0.60698706:1
0.20810137,-0.56484656,-1.0405068,-1.278337,-1.3377945,-1.0999644,-1.8134548,-0.74321916,0.32701643,1.6945397,2.2296575,1.8134548,1.0405068,0.20810137,-0.029728762,0.029728771,0.029728771,0.029728771,-0.14864383,0.029728771,-0.20810137,-0.2675589,0.74321917,0.14864383:2
-1.1454914,-1.3887816,-1.6077428,-1.6320718,-1.5834138,-1.3401236,-0.90220116,-0.48860781,0.53321104,1.1657656,1.0927785,0.97113341,0.70351418,0.46022397,0.38723691,0.58186908,0.55754006,0.38723691,0.31424985,1.3360687,1.1171075,0.70351418,0.070959654,-0.29397565:1
-0.88008476,-1.258303,-1.461959,-1.5492401,-1.6074275,-1.5201464,-1.0255533,-0.79280362,0.3418511,0.77825678,1.2437561,1.2437561,1.156475,0.66188192,0.72006936,0.80735049,1.0691939,0.86553791,0.48731966,0.42913224,0.22547626,0.51641337,-0.094554558,-0.35639796:2
-0.41137184,-0.67348487,-1.1103399,-1.2413964,-1.4161385,-1.3287674,-0.84822689,-0.58611386,-0.80454138,0.069168714,0.68076578,0.76813679,0.63708028,0.069168714,-0.36768633,-0.49874285,-0.36768633,-0.018202296,1.7729034,2.0350164,1.5544759,1.4234194,0.63708028,0.025483209:1
-0.98673689,-1.3844143,-1.5037175,-1.5832529,-1.6230207,-1.3446465,-0.98673689,-0.091962883,0.92211434,1.120953,1.120953,1.0016498,0.80281114,0.32559833,0.34548219,0.38524993,0.524437,0.74315954,1.2203724,1.1408369,0.54432087,0.26594672,-0.27091769,-0.68847889:1
-0.88996175,-1.2677414,-1.4421013,-1.5292812,-1.5292812,-1.4711613,-1.1805615,-0.7156019,0.2433773,1.0570566,1.2604764,1.3185964,1.0861166,0.73739688,0.82457681,0.88269676,0.96987669,0.62115698,0.44679712,0.18525734,0.098077418,0.592097,0.098077418,-0.39594217:2
-0.026952283,-0.6276032,-1.1820502,-1.5978855,-1.4592737,-1.2282541,-1.7827011,-1.2282541,0.34267905,1.3591652,1.6825926,1.5439809,0.89712605,0.43508688,0.065455552,0.15786338,-0.026952283,0.15786338,-0.026952283,0.11165947,0.15786338,1.0819417,0.89712605,0.29647513:2
-1.06441,-1.3237586,-1.5614948,-1.6047196,-1.5831072,-1.4318205,-0.91312324,-0.07024024,0.64296846,0.90231707,0.90231707,0.8590923,0.66458084,0.36200746,0.36200746,0.51329415,0.59974369,0.64296846,1.3561771,1.3777895,0.83747992,0.36200746,-0.048627855,-0.78344893:1
-0.7804595,-1.1359389,-1.38204,-1.4640737,-1.4640737,-1.38204,-1.4914182,-0.67108123,0.23128946,1.2430384,1.461795,1.4071058,1.2977276,0.69614709,0.69614709,0.83286993,0.8602145,0.45004599,0.36801229,0.25863403,-0.014811635,0.039877498,0.20394489,-0.26091274:2
0.3221985,-0.084789069,-0.54991772,-0.84062312,-0.95690528,-1.0150464,-0.72434096,-1.480175,-1.1313285,-0.37549448,0.26405742,0.49662174,0.49662174,0.14777526,-0.25921232,-0.25921232,-0.66619988,-0.43363556,-0.49177664,0.20591634,2.182713,2.2408541,1.7175844,1.1943147:2
-0.76022146,-1.2361862,-1.3948411,-1.5799385,-1.6857084,-1.3948411,-1.4741686,-0.60156654,0.5883453,1.117195,1.3022924,1.2494074,0.93209762,0.72055773,0.74700021,0.82632767,0.85277016,0.61478779,0.50901784,0.4032479,0.19170802,0.085938081,0.19170802,-0.20492926:2
0.50632137,-0.34943306,-0.86288571,-1.2622378,-1.3763384,-1.2051875,-0.86288571,-1.6045395,-0.9769863,-0.064181578,0.73452256,0.79157285,0.79157285,0.1640196,-0.34943306,-0.23533247,-0.23533247,-0.29238276,-0.064181578,1.019774,1.019774,2.3319308,1.4761764,0.90567344:2
-0.46880101,-0.89853527,-1.3673363,-1.4454698,-1.4845365,-1.250136,-0.74226826,-0.50786776,0.50786776,1.4454698,1.4845365,1.2110693,0.82040177,0.19533375,-0.31253401,-0.31253401,-0.42973426,-0.42973426,-0.11720025,1.718937,1.4845365,0.93760203,0.19533375,-0.2344005:1
-1.0667555,-1.3887949,-1.5498146,-1.6418258,-1.618823,-1.4348005,-0.97474423,-0.35366826,0.63545273,1.2335259,1.0495034,0.79647241,0.5894471,0.38242178,0.47443303,0.54344147,0.54344147,0.35941896,0.45143022,1.4175484,1.0265006,0.7734696,0.083385197,-0.33066545:1
-0.19934463,-0.70591453,-1.2124844,-1.5501976,-1.5501976,-1.4939121,-1.0999133,-0.9310567,-0.25563017,1.1515084,1.7143638,1.4892216,1.1515084,1.0952228,0.082083086,-0.19934463,-0.030488,-0.030488,-0.086773544,0.025797542,0.4760819,1.4892216,0.53236744,0.13836862:2
-0.98161424,-1.3422072,-1.5345235,-1.6547212,-1.6066421,-1.4383654,-0.98161424,-0.45274453,0.7492321,1.3021413,1.3742599,1.2300228,0.98962743,0.77327163,0.65307397,0.41267864,0.6771135,0.48479724,0.24440191,0.19632285,0.14824378,0.7492321,0.24440191,-0.23638874:2
0.29828413,-0.51807244,-1.0832424,-1.334429,-1.2716324,-1.2088357,-1.9623956,-0.76925908,0.4866741,1.617014,1.993794,1.6798107,1.240234,0.54947076,-0.20408914,-0.015699168,0.10989415,-0.078495827,-0.015699168,-0.015699168,-0.015699168,-0.2668858,0.73786074,0.047097491:2
-0.45950334,-0.93109887,-1.438971,-1.5115242,-1.6203539,-1.4026944,-0.89482229,0.012092188,0.48368771,1.3180491,1.3543256,1.1003896,0.51996429,0.19347509,-0.31439702,-0.20556728,-0.31439702,-0.24184386,0.30230482,1.6808149,1.6808149,0.84645351,0.12092193,-0.27812044:1
-0.95323748,-1.6211995,-1.3707138,-1.454209,-1.454209,-1.565536,-1.1480597,-0.2574437,0.66100409,1.1898074,1.2176391,1.2454709,0.99498511,0.60534059,0.66100409,0.7166676,0.91148986,0.52184534,0.46618183,0.27135958,0.74449935,0.29919133,-0.17394845,-0.50792946:2
-0.82903973,-1.1943792,-1.5035127,-1.6440279,-1.5878218,-1.4754097,-1.4473066,-0.21077281,0.68852451,1.2786884,1.2505853,1.2505853,0.99765796,0.66042147,0.63231843,0.85714275,0.77283363,0.60421538,0.29508193,0.15456673,0.12646369,0.21077281,0.32318497,-0.21077281:2
-1.1189816,-1.4020974,-1.5436553,-1.604323,-1.5436553,-1.3818749,-1.0583139,-0.20896646,0.45837801,0.96394199,1.0043871,0.6606036,0.72127128,0.5594908,0.59993592,0.88305175,0.80216151,1.0650548,1.1054999,1.0043871,0.57971336,0.27637497,-0.24941158,-0.57297253:1
-0.052620727,-0.57519896,-1.0977772,-1.3590663,-1.4461627,-1.4026145,-0.96713263,-0.61874714,-0.83648807,-0.1397171,0.55705388,0.60060207,0.55705388,0.12157202,-0.35745803,-0.31390984,-0.53165077,-0.052620727,1.4715658,1.5586622,1.9070476,1.5586622,1.1231803,0.29576476:1
1.2090065,0.57028611,-0.25092589,-0.34217166,-0.70715477,-0.615909,-0.34217166,-1.3458752,-0.9808921,-0.43341744,0.11405722,0.38779455,0.29654878,-0.15968011,-0.43341744,-0.70715477,-0.52466322,-0.88964633,-0.70715477,-0.43341744,-0.25092589,2.2127101,2.2127101,2.1214643:2
-0.81595401,-1.0805877,-1.3452215,-1.4334327,-1.521644,-1.4334327,-1.521644,-0.66893527,0.15436968,1.1835009,1.3305196,1.3011158,1.2423084,0.80125213,0.80125213,0.86005963,0.91886712,0.65423339,0.47781091,0.36019591,-0.1396678,-0.16907155,0.15436968,-0.11026406:2
-1.2385691,-1.3335393,-1.5044856,-1.5614677,-1.5424736,-1.4854915,-1.0106408,-0.13691531,0.60385192,1.0027266,1.0027266,0.90775642,0.75580417,0.52787579,0.50888176,0.64183998,0.71781611,1.0976967,1.1356848,0.92675045,0.52787579,0.29994741,-0.26987353,-0.57377803:1
-1.0379296,-1.3016576,-1.4694845,-1.5893609,-1.6133362,-1.5174351,-1.0619049,-0.0069927812,1.2157462,1.1438204,1.1198451,1.0958698,0.97599346,0.35263633,0.42456215,0.44853743,0.44853743,0.30468578,0.44853743,1.2157462,0.6643149,0.35263633,-0.10289389,-0.51047355:1
-0.37357907,-0.98663192,-1.4464215,-1.6763164,-1.752948,-1.3697899,-0.91000031,-0.98663192,-0.22031586,0.85252662,1.0057898,1.3123162,1.2356846,0.77589501,0.46936859,0.77589501,0.92915822,0.39273699,0.16284217,0.0095789557,-0.37357907,1.3123162,0.92915822,-0.06705265:2
-1.159152,-1.3014,-1.5249326,-1.5655749,-1.6062172,-1.443648,-1.0778674,0.019474433,0.73071451,1.1777797,1.1777797,1.0964951,1.0355317,0.79167795,0.71039337,0.48686077,0.44621848,0.48686077,0.26332817,0.89328367,0.66975108,0.46653962,-0.12277359,-0.65112336:1
-0.6949193,-1.2358295,-1.4161329,-1.5062846,-1.5062846,-1.5062846,-1.0555261,-1.0104502,-0.063857444,1.1081146,1.3785697,1.3334938,1.1081146,0.74750781,0.61228026,1.0630387,0.9278112,0.61228026,0.25167348,0.16152179,0.026294249,0.65735611,0.20659763,-0.19908499:2
0.98403309,0.16966088,-0.51942331,-0.83264339,-0.8952874,-0.70735536,-0.70735536,-1.7723037,-0.8952874,0.48288096,0.67081301,0.73345703,0.73345703,0.42023694,-0.51942331,-0.64471135,-0.70735536,-0.76999938,-0.70735536,-0.26884724,0.2323049,2.4248455,1.9236934,1.1719652:2
